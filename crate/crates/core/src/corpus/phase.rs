use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::{Corpus, Label, StrategyLabel};

/// Per-strategy histogram over conversation phases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseDistribution {
    pub n_buckets: usize,
    pub counts: BTreeMap<StrategyLabel, Vec<u64>>,
}

/// 1-based bucket of the utterance at global position `k` in a dialogue of
/// `n` utterances. Buckets are `((i-1)/B, i/B]`, so `k/n` exactly on a
/// boundary falls into the lower bucket.
pub fn phase_bucket(k: usize, n: usize, n_buckets: usize) -> usize {
    debug_assert!(k >= 1 && k <= n && n_buckets >= 1);
    (k * n_buckets).div_ceil(n)
}

pub fn strategy_phase_distribution(corpus: &Corpus, n_buckets: usize) -> PhaseDistribution {
    assert!(n_buckets >= 1, "n_buckets must be at least 1");
    let mut counts: BTreeMap<_, _> = StrategyLabel::ALL
        .iter()
        .map(|s| (*s, vec![0u64; n_buckets]))
        .collect();
    for d in &corpus.dialogues {
        let n = d.turns.len();
        for t in &d.turns {
            if let Some(s) = t.strategy {
                let b = phase_bucket(t.index, n, n_buckets);
                counts.get_mut(&s).expect("closed set")[b - 1] += 1;
            }
        }
    }
    PhaseDistribution { n_buckets, counts }
}

impl PhaseDistribution {
    pub fn to_report(&self) -> Value {
        json!({
            "n_buckets": self.n_buckets,
            "strategies": self
                .counts
                .iter()
                .map(|(k, v)| (k.as_str().to_string(), v.clone()))
                .collect::<BTreeMap<_, _>>(),
        })
    }

    pub fn totals(&self) -> BTreeMap<StrategyLabel, u64> {
        self.counts.iter().map(|(k, v)| (*k, v.iter().sum())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_goes_to_lower_bucket() {
        assert_eq!(phase_bucket(7, 28, 4), 1);
        assert_eq!(phase_bucket(8, 28, 4), 2);
        assert_eq!(phase_bucket(28, 28, 4), 4);
        assert_eq!(phase_bucket(1, 28, 4), 1);
    }

    #[test]
    fn single_bucket_collects_everything() {
        for k in 1..=9 {
            assert_eq!(phase_bucket(k, 9, 1), 1);
        }
    }

    #[test]
    fn matches_rational_definition() {
        for n in 1..40usize {
            for k in 1..=n {
                for b in 1..7usize {
                    let p = k as f64 / n as f64;
                    let expected = (1..=b).find(|i| k * b <= i * n).unwrap();
                    assert_eq!(phase_bucket(k, n, b), expected, "k={k} n={n} b={b} p={p}");
                }
            }
        }
    }
}

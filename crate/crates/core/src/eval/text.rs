//! Surface-overlap metrics over whitespace tokens.

use std::collections::HashMap;

use super::EvalError;

/// ROUGE-L recall weight.
pub const ROUGE_BETA: f64 = 1.2;

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn ngram_counts<'a>(toks: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], u64> {
    let mut out = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

fn check_pairs(candidates: &[String], references: &[String]) -> Result<(), EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(EvalError::Empty("corpus"));
    }
    Ok(())
}

/// Corpus-level BLEU with clipped n-gram precisions for orders `1..=max_n`
/// and the brevity penalty. Orders ≥ 2 whose clipped count is zero use
/// add-one smoothing on both numerator and denominator.
pub fn bleu(candidates: &[String], references: &[String], max_n: usize) -> Result<f64, EvalError> {
    check_pairs(candidates, references)?;
    if max_n == 0 {
        return Err(EvalError::Empty("n-gram orders"));
    }
    let mut matched = vec![0u64; max_n];
    let mut total = vec![0u64; max_n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let (c, r) = (tokens(c), tokens(r));
        c_len += c.len();
        r_len += r.len();
        for n in 1..=max_n {
            let rc = ngram_counts(&r, n);
            for (g, cnt) in ngram_counts(&c, n) {
                matched[n - 1] += cnt.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += cnt;
            }
        }
    }
    if c_len == 0 || matched[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..max_n {
        let p = if n > 0 && matched[n] == 0 {
            (matched[n] + 1) as f64 / (total[n] + 1) as f64
        } else {
            matched[n] as f64 / total[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if c_len < r_len {
        (1.0 - r_len as f64 / c_len as f64).exp()
    } else {
        1.0
    };
    Ok((bp * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0))
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure for one pair.
pub fn rouge_l_pair(candidate: &str, reference: &str) -> f64 {
    let (c, r) = (tokens(candidate), tokens(reference));
    if c.is_empty() && r.is_empty() {
        return 1.0;
    }
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    ((1.0 + b2) * p * rec / (rec + b2 * p)).clamp(0.0, 1.0)
}

/// Mean sentence-level ROUGE-L.
pub fn rouge_l(candidates: &[String], references: &[String]) -> Result<f64, EvalError> {
    check_pairs(candidates, references)?;
    let sum: f64 = candidates.iter().zip(references).map(|(c, r)| rouge_l_pair(c, r)).sum();
    Ok(sum / candidates.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn bleu2_hand_example() {
        let b = bleu(&s(&["a b c d"]), &s(&["a b x d"]), 2).unwrap();
        assert!((b - 0.5).abs() < 1e-9);
    }

    #[test]
    fn bleu_identity_and_empty() {
        for n in [2, 4] {
            assert_eq!(bleu(&s(&["the cat sat"]), &s(&["the cat sat"]), n).unwrap(), 1.0);
        }
        assert_eq!(bleu(&s(&[""]), &s(&["a b"]), 2).unwrap(), 0.0);
        assert!(matches!(bleu(&[], &[], 2), Err(EvalError::Empty(_))));
    }

    #[test]
    fn bleu_brevity_penalty() {
        // p1 = 1, p2 = 1, c = 2, r = 4 -> exp(1 - 2)
        let b = bleu(&s(&["a b"]), &s(&["a b c d"]), 2).unwrap();
        assert!((b - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&s(&["a b c"]), &s(&["a b c"])).unwrap(), 1.0);
        assert_eq!(rouge_l(&s(&["a b"]), &s(&["c d"])).unwrap(), 0.0);
        assert!((rouge_l(&s(&["a b c d"]), &s(&["a c b d"])).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rouge_weights_recall() {
        // LCS 2: P = 1, R = 0.5
        let b2 = ROUGE_BETA * ROUGE_BETA;
        let expect = (1.0 + b2) * 0.5 / (0.5 + b2);
        assert!((rouge_l_pair("a b", "a b c d") - expect).abs() < 1e-12);
    }
}

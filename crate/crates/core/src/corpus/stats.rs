use std::collections::BTreeMap;

use num_rational::Ratio;
use serde_json::{json, Value};

use super::{whitespace_tokens, Corpus, EmotionLabel, Label, Speaker, StrategyLabel};

/// A quantity broken down by speaker role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoleCounts<T> {
    pub total: T,
    pub therapist: T,
    pub client: T,
}

/// Corpus statistics. Averages are exact rationals; the canonical report
/// renders them rounded half-up to one decimal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStats {
    pub n_dialogues: u64,
    pub n_utterances: RoleCounts<u64>,
    /// Utterances per dialogue.
    pub avg_dialogue_len: RoleCounts<Ratio<u64>>,
    /// Whitespace tokens per utterance.
    pub avg_utterance_len: RoleCounts<Ratio<u64>>,
    pub emotion_histogram: BTreeMap<EmotionLabel, u64>,
    pub strategy_histogram: BTreeMap<StrategyLabel, u64>,
    pub scenario_histogram: BTreeMap<String, u64>,
}

fn ratio(num: u64, den: u64) -> Ratio<u64> {
    if den == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(num, den)
    }
}

/// Round half-up to one decimal place.
pub(crate) fn one_decimal(r: Ratio<u64>) -> f64 {
    let tenths = (20 * r.numer() + r.denom()) / (2 * r.denom());
    tenths as f64 / 10.0
}

pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let mut n_utt = RoleCounts::<u64>::default();
    let mut n_tok = RoleCounts::<u64>::default();
    let mut emotion_histogram: BTreeMap<_, _> = EmotionLabel::ALL.iter().map(|l| (*l, 0)).collect();
    let mut strategy_histogram: BTreeMap<_, _> = StrategyLabel::ALL.iter().map(|l| (*l, 0)).collect();
    let mut scenario_histogram = BTreeMap::new();

    for d in &corpus.dialogues {
        *scenario_histogram.entry(d.scenario.clone()).or_insert(0) += 1;
        for t in &d.turns {
            let toks = whitespace_tokens(&t.utterance) as u64;
            n_utt.total += 1;
            n_tok.total += toks;
            match t.speaker {
                Speaker::Therapist => {
                    n_utt.therapist += 1;
                    n_tok.therapist += toks;
                }
                Speaker::Client => {
                    n_utt.client += 1;
                    n_tok.client += toks;
                }
            }
            *emotion_histogram.get_mut(&t.emotion).expect("closed set") += 1;
            if let Some(s) = t.strategy {
                *strategy_histogram.get_mut(&s).expect("closed set") += 1;
            }
        }
    }

    let n_dialogues = corpus.dialogues.len() as u64;
    CorpusStats {
        n_dialogues,
        n_utterances: n_utt,
        avg_dialogue_len: RoleCounts {
            total: ratio(n_utt.total, n_dialogues),
            therapist: ratio(n_utt.therapist, n_dialogues),
            client: ratio(n_utt.client, n_dialogues),
        },
        avg_utterance_len: RoleCounts {
            total: ratio(n_tok.total, n_utt.total),
            therapist: ratio(n_tok.therapist, n_utt.therapist),
            client: ratio(n_tok.client, n_utt.client),
        },
        emotion_histogram,
        strategy_histogram,
        scenario_histogram,
    }
}

impl CorpusStats {
    /// Structured report; render with [`crate::canonical::to_canonical_string`].
    pub fn to_report(&self) -> Value {
        let avg = |r: &RoleCounts<Ratio<u64>>| {
            json!({
                "total": one_decimal(r.total),
                "therapist": one_decimal(r.therapist),
                "client": one_decimal(r.client),
            })
        };
        json!({
            "n_dialogues": self.n_dialogues,
            "n_utterances": {
                "total": self.n_utterances.total,
                "therapist": self.n_utterances.therapist,
                "client": self.n_utterances.client,
            },
            "avg_dialogue_len": avg(&self.avg_dialogue_len),
            "avg_utterance_len": avg(&self.avg_utterance_len),
            "emotion_histogram": self.emotion_histogram.iter().map(|(k, v)| (k.as_str().to_string(), *v)).collect::<BTreeMap<_, _>>(),
            "strategy_histogram": self.strategy_histogram.iter().map(|(k, v)| (k.as_str().to_string(), *v)).collect::<BTreeMap<_, _>>(),
            "scenario_histogram": self.scenario_histogram,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, Split, Turn};

    fn turn(index: usize, speaker: Speaker, utt: &str) -> Turn {
        Turn {
            index,
            speaker,
            utterance: utt.into(),
            emotion: EmotionLabel::Neutral,
            strategy: (speaker == Speaker::Therapist).then_some(StrategyLabel::Approval),
            clips: vec![],
            raw_annotations: None,
        }
    }

    fn dialogue(id: &str, utts: &[&str]) -> Dialogue {
        Dialogue {
            id: id.into(),
            scenario: "anxiety".into(),
            turns: utts
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let sp = if i % 2 == 0 { Speaker::Client } else { Speaker::Therapist };
                    turn(i + 1, sp, u)
                })
                .collect(),
        }
    }

    #[test]
    fn three_dialogues_of_four_turns() {
        let corpus = Corpus {
            split: Split::Train,
            dialogues: (0..3).map(|i| dialogue(&format!("d{i}"), &["a", "b", "c", "d"])).collect(),
        };
        let s = compute_stats(&corpus);
        assert_eq!(s.n_dialogues, 3);
        assert_eq!(s.n_utterances.total, 12);
        assert_eq!(s.avg_dialogue_len.total, Ratio::from_integer(4));
        assert_eq!(s.avg_dialogue_len.therapist, Ratio::from_integer(2));
    }

    #[test]
    fn utterance_length_is_whitespace_tokens() {
        let corpus = Corpus {
            split: Split::Train,
            dialogues: vec![dialogue("d", &["a b", "c d e", "f", "g"])],
        };
        let s = compute_stats(&corpus);
        assert_eq!(s.avg_utterance_len.total, Ratio::new(7, 4));
        assert_eq!(one_decimal(s.avg_utterance_len.total), 1.8);
        assert_eq!(s.avg_utterance_len.client, Ratio::new(3, 2));
        assert_eq!(s.avg_utterance_len.therapist, Ratio::new(4, 2));
    }

    #[test]
    fn histograms_sum_to_counts() {
        let corpus = Corpus {
            split: Split::Train,
            dialogues: vec![dialogue("d", &["a", "b", "c"]), dialogue("e", &["x", "y"])],
        };
        let s = compute_stats(&corpus);
        assert_eq!(s.emotion_histogram.values().sum::<u64>(), s.n_utterances.total);
        assert_eq!(s.strategy_histogram.values().sum::<u64>(), s.n_utterances.therapist);
        assert_eq!(s.scenario_histogram["anxiety"], 2);
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(one_decimal(Ratio::new(1, 4)), 0.3);
        assert_eq!(one_decimal(Ratio::new(1, 20)), 0.1);
        assert_eq!(one_decimal(Ratio::new(1, 21)), 0.0);
        assert_eq!(one_decimal(Ratio::new(141, 5)), 28.2);
    }
}

//! Sequential inference: user emotion, then strategy, then system emotion,
//! then the response, each stage conditioned on everything emitted before.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::history::History;
use super::linearize::{encode_history, marker_id, LinearizeError};
use super::schema::{LossPolicy, Role, SegmentSchema};
use crate::corpus::{EmotionLabel, Label, StrategyLabel};
use crate::model::generator::{Generator, GeneratorError};
use crate::model::vocab::{TokenId, Vocab, N_SPECIALS};

pub const DEFAULT_MAX_RESPONSE_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DecodeStrategy {
    #[default]
    Greedy,
    /// Applies to response words only; labels are always the argmax.
    Sample { temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: DecodeStrategy,
    pub max_response_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: DecodeStrategy::Greedy,
            max_response_len: DEFAULT_MAX_RESPONSE_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerateError {
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("generator vocabulary of {generator} does not match tokenizer vocabulary of {vocab}")]
    VocabMismatch { generator: usize, vocab: usize },
    #[error("non-finite logit for token {token} at the {stage} stage")]
    NonFinite { stage: &'static str, token: TokenId },
    #[error("vocabulary has no word tokens to generate")]
    NoWords,
    #[error("invalid decode settings: {0}")]
    BadDecode(String),
}

/// Label probabilities per stage; `None` when the stage is ablated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StageScores {
    pub user_emotion: Option<BTreeMap<String, f64>>,
    pub strategy: Option<BTreeMap<String, f64>>,
    pub system_emotion: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub user_emotion: Option<EmotionLabel>,
    pub strategy: Option<StrategyLabel>,
    pub system_emotion: Option<EmotionLabel>,
    pub response: String,
    /// The response hit the length cap before an end token.
    pub truncated: bool,
    pub stage_scores: StageScores,
}

/// Decoder prefix seen at the start of one label stage, before its marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTrace {
    pub role: Role,
    pub conditioning: Vec<TokenId>,
    pub chosen: TokenId,
}

fn check_finite(logits: &[f64], ids: impl IntoIterator<Item = TokenId>, stage: &'static str) -> Result<(), GenerateError> {
    for id in ids {
        if !logits[id as usize].is_finite() {
            return Err(GenerateError::NonFinite { stage, token: id });
        }
    }
    Ok(())
}

/// Softmax restricted to `ids`, computed in f64.
fn restricted_softmax(logits: &[f64], ids: &[TokenId], temperature: f64) -> Vec<f64> {
    let max = ids.iter().map(|&i| logits[i as usize]).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = ids.iter().map(|&i| ((logits[i as usize] - max) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Index of the largest value; ties go to the earliest.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Pick among `L` labels from full-vocabulary logits.
pub fn constrained_label<L: Label>(
    logits: &[f64],
    ids: &[TokenId],
    stage: &'static str,
) -> Result<(L, BTreeMap<String, f64>), GenerateError> {
    check_finite(logits, ids.iter().copied(), stage)?;
    let probs = restricted_softmax(logits, ids, 1.0);
    let scores = L::ALL.iter().zip(&probs).map(|(l, &p)| (l.as_str().to_string(), p)).collect();
    Ok((L::ALL[argmax(&probs)], scores))
}

struct Session<'a> {
    generator: &'a dyn Generator,
    vocab: &'a Vocab,
    source: Vec<TokenId>,
    prefix: Vec<TokenId>,
    trace: Vec<StageTrace>,
}

impl Session<'_> {
    fn logits(&self) -> Result<Vec<f64>, GenerateError> {
        let logits = self.generator.next_logits(&self.source, &self.prefix)?;
        if logits.len() != self.vocab.len() {
            return Err(GeneratorError::Shape {
                expected: self.vocab.len(),
                got: logits.len(),
            }
            .into());
        }
        Ok(logits)
    }

    fn label_stage<L: Label>(
        &mut self,
        marker: TokenId,
        role: Role,
        ids: Vec<TokenId>,
        stage: &'static str,
    ) -> Result<(L, BTreeMap<String, f64>), GenerateError> {
        let conditioning = self.prefix.clone();
        self.prefix.push(marker);
        let (label, scores) = constrained_label::<L>(&self.logits()?, &ids, stage)?;
        let chosen = ids[label.index()];
        self.prefix.push(chosen);
        self.trace.push(StageTrace {
            role,
            conditioning,
            chosen,
        });
        Ok((label, scores))
    }
}

/// Run all included stages in order.
pub fn sequential_generate(
    generator: &dyn Generator,
    history: &History,
    schema: &SegmentSchema,
    vocab: &Vocab,
    decode: &DecodeConfig,
) -> Result<PipelineOutput, GenerateError> {
    sequential_generate_traced(generator, history, schema, vocab, decode).map(|(out, _)| out)
}

/// As [`sequential_generate`], also returning each label stage's conditioning.
pub fn sequential_generate_traced(
    generator: &dyn Generator,
    history: &History,
    schema: &SegmentSchema,
    vocab: &Vocab,
    decode: &DecodeConfig,
) -> Result<(PipelineOutput, Vec<StageTrace>), GenerateError> {
    schema.validate().map_err(LinearizeError::from)?;
    if generator.vocab_size() != vocab.len() {
        return Err(GenerateError::VocabMismatch {
            generator: generator.vocab_size(),
            vocab: vocab.len(),
        });
    }
    let mut rng = match decode.strategy {
        DecodeStrategy::Greedy => None,
        DecodeStrategy::Sample { temperature, seed } => {
            if !(temperature.is_finite() && temperature > 0.0) {
                return Err(GenerateError::BadDecode(format!("temperature {temperature}")));
            }
            Some((ChaCha8Rng::seed_from_u64(seed), temperature))
        }
    };

    let hist = encode_history(history, schema, vocab)?;
    let mut prefix = vec![vocab.begin()];
    if schema.loss_policy == LossPolicy::FullSequence {
        prefix.extend_from_slice(&hist);
    }
    let source = if hist.is_empty() { vec![vocab.begin()] } else { hist };
    let mut s = Session {
        generator,
        vocab,
        source,
        prefix,
        trace: Vec::new(),
    };

    let mut out = PipelineOutput {
        user_emotion: None,
        strategy: None,
        system_emotion: None,
        response: String::new(),
        truncated: false,
        stage_scores: StageScores::default(),
    };
    if schema.includes(Role::UsrEmo) {
        let ids = EmotionLabel::ALL.iter().map(|&l| vocab.user_emotion(l)).collect();
        let m = marker_id(vocab, schema, Role::UsrEmo)?;
        let (l, sc) = s.label_stage::<EmotionLabel>(m, Role::UsrEmo, ids, "user emotion")?;
        out.user_emotion = Some(l);
        out.stage_scores.user_emotion = Some(sc);
    }
    if schema.includes(Role::Strat) {
        let ids = StrategyLabel::ALL.iter().map(|&l| vocab.strategy(l)).collect();
        let m = marker_id(vocab, schema, Role::Strat)?;
        let (l, sc) = s.label_stage::<StrategyLabel>(m, Role::Strat, ids, "strategy")?;
        out.strategy = Some(l);
        out.stage_scores.strategy = Some(sc);
    }
    if schema.includes(Role::SysEmo) {
        let ids = EmotionLabel::ALL.iter().map(|&l| vocab.system_emotion(l)).collect();
        let m = marker_id(vocab, schema, Role::SysEmo)?;
        let (l, sc) = s.label_stage::<EmotionLabel>(m, Role::SysEmo, ids, "system emotion")?;
        out.system_emotion = Some(l);
        out.stage_scores.system_emotion = Some(sc);
    }

    let words: Vec<TokenId> = vocab.word_ids().collect();
    if words.is_empty() {
        return Err(GenerateError::NoWords);
    }
    s.prefix.push(marker_id(vocab, schema, Role::Resp)?);
    let mut emitted: Vec<TokenId> = Vec::new();
    out.truncated = true;
    while emitted.len() < decode.max_response_len {
        let logits = s.logits()?;
        let mut candidates = words.clone();
        if !emitted.is_empty() {
            candidates.push(vocab.end());
        }
        check_finite(&logits, candidates.iter().copied(), "response")?;
        let pick = match rng.as_mut() {
            None => argmax(&candidates.iter().map(|&i| logits[i as usize]).collect::<Vec<_>>()),
            Some((rng, temperature)) => {
                let probs = restricted_softmax(&logits, &candidates, *temperature);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                probs
                    .iter()
                    .position(|&p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(probs.len() - 1)
            }
        };
        let tok = candidates[pick];
        if tok == vocab.end() {
            out.truncated = false;
            break;
        }
        debug_assert!(tok as usize >= N_SPECIALS);
        emitted.push(tok);
        s.prefix.push(tok);
    }
    out.response = vocab.decode_words(&emitted);
    Ok((out, s.trace))
}

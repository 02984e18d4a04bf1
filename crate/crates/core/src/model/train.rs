//! Teacher-forced training on linearized therapist turns.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, TrainingMeta};
use super::config::{ConfigError, ModelConfig};
use super::generator::fit_source;
use super::optim::{Adam, AdamConfig};
use super::transformer::{Dropout, ForwardError, Transformer};
use super::vocab::{TokenId, Vocab, N_SPECIALS};
use crate::corpus::Corpus;
use crate::cues::{escape_segment, CueBackend, CueError};
use crate::reasoning::history::{dialogue_examples, DialogueExample, HistoryEntry};
use crate::reasoning::linearize::{linearize, LinearizeError, ModelInputs, RSP_WORD};
use crate::reasoning::schema::{SchemaError, SegmentSchema};
use crate::scalar::{lit, Scalar};

const SHUFFLE_SALT: u64 = 0x5348_5546;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Words seen fewer times map to `<unk>`.
    pub min_word_count: usize,
    /// Stop once teacher-forced label accuracy on the training set reaches this.
    pub stop_at_label_accuracy: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            epochs: 200,
            batch_size: 8,
            min_word_count: 1,
            stop_at_label_accuracy: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training corpus has no dialogues")]
    EmptyCorpus,
    #[error("training corpus has no therapist turn following a client turn")]
    NoExamples,
    #[error("invalid training options: {0}")]
    Options(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub checkpoint: Checkpoint<T>,
    /// Mean per-token loss of each epoch.
    pub loss_curve: Vec<f64>,
    /// Teacher-forced label accuracy after the last epoch, when tracked.
    pub label_accuracy: Option<f64>,
    pub n_examples: usize,
}

/// Every therapist turn that directly follows a client turn, in corpus order.
pub fn prepare_examples(
    corpus: &Corpus,
    cues: &dyn CueBackend,
    schema: &SegmentSchema,
) -> Result<Vec<DialogueExample>, CueError> {
    let mut out = Vec::new();
    for d in &corpus.dialogues {
        out.extend(dialogue_examples(d, cues, schema)?);
    }
    Ok(out)
}

/// Vocabulary over every text the encoder or decoder will see; each
/// history entry is counted once per dialogue.
pub fn build_vocab(examples: &[DialogueExample], min_count: usize) -> Vocab {
    let mut seen: BTreeSet<(&str, usize)> = BTreeSet::new();
    let mut texts: Vec<String> = Vec::new();
    for ex in examples {
        for e in &ex.history.entries {
            if !seen.insert((ex.dialogue_id.as_str(), e.index())) {
                continue;
            }
            texts.push(match e {
                HistoryEntry::Context { context, .. } => context.rendered.clone(),
                HistoryEntry::Response { record, .. } => format!("{RSP_WORD} {}", escape_segment(&record.text)),
            });
        }
        texts.push(ex.gold.response.clone());
    }
    Vocab::build(texts.iter().map(String::as_str), min_count)
}

/// Model inputs for one example, clipped to the positional tables.
pub fn example_inputs(
    ex: &DialogueExample,
    schema: &SegmentSchema,
    vocab: &Vocab,
    config: &ModelConfig,
) -> Result<ModelInputs, LinearizeError> {
    let seq = linearize(&ex.history, &ex.gold, schema, vocab)?;
    let mut mi = seq.model_inputs(schema.loss_policy, vocab);
    mi.source = fit_source(&mi.source, config.context_len);
    let max = config.decoder_len();
    mi.dec_in.truncate(max);
    mi.targets.truncate(max);
    mi.mask.truncate(max);
    Ok(mi)
}

/// Which label sub-vocabulary a token belongs to, as an id range.
fn label_range(t: TokenId) -> Option<std::ops::Range<usize>> {
    match t as usize {
        9..=15 => Some(9..16),
        16..=25 => Some(16..26),
        26..=32 => Some(26..N_SPECIALS),
        _ => None,
    }
}

/// Fraction of label spans whose constrained argmax equals the gold label
/// under teacher forcing.
pub fn teacher_forced_label_accuracy<T: Scalar>(
    model: &Transformer<T>,
    inputs: &[ModelInputs],
) -> Result<f64, ForwardError> {
    let v = model.vocab_size();
    let per: Vec<(usize, usize)> = inputs
        .par_iter()
        .map(|mi| {
            let cache = model.forward(&mi.source, &mi.dec_in, None)?;
            let mut hit = 0;
            let mut total = 0;
            for (i, &t) in mi.targets.iter().enumerate() {
                let Some(range) = label_range(t) else { continue };
                let row = &cache.logits[i * v..(i + 1) * v];
                let mut best = range.start;
                for j in range {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                total += 1;
                hit += usize::from(best == t as usize);
            }
            Ok((hit, total))
        })
        .collect::<Result<_, ForwardError>>()?;
    let (hit, total) = per.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

/// One line per epoch: `epoch,loss`.
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, l));
    }
    out
}

pub fn train<T: Scalar>(
    corpus: &Corpus,
    cues: &dyn CueBackend,
    schema: &SegmentSchema,
    config: &ModelConfig,
    opt: &TrainOptions,
) -> Result<TrainOutcome<T>, TrainError> {
    if corpus.dialogues.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    config.validate()?;
    schema.validate()?;
    if opt.batch_size == 0 || opt.epochs == 0 {
        return Err(TrainError::Options("epochs and batch_size must be positive".into()));
    }
    let examples = prepare_examples(corpus, cues, schema)?;
    if examples.is_empty() {
        return Err(TrainError::NoExamples);
    }
    let vocab = build_vocab(&examples, opt.min_word_count);
    let inputs = examples
        .iter()
        .map(|ex| example_inputs(ex, schema, &vocab, config))
        .collect::<Result<Vec<_>, _>>()?;

    let mut model = Transformer::<T>::new(config.clone(), vocab.len());
    let mut adam = Adam::new(opt.adam, &model.params);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut curve = Vec::with_capacity(opt.epochs);
    let mut accuracy = None;

    for epoch in 1..=opt.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(opt.batch_size).enumerate() {
            let model_ref = &model;
            let parts: Vec<(T, _)> = chunk
                .par_iter()
                .map(|&i| {
                    let mi = &inputs[i];
                    let mut grads = model_ref.params.zeros_like();
                    let mut drng = ChaCha8Rng::seed_from_u64(config.seed ^ ((epoch as u64) << 32) ^ i as u64);
                    let dropout = (config.dropout > 0.0).then_some(Dropout {
                        rate: config.dropout,
                        rng: &mut drng,
                    });
                    let loss = model_ref.loss_and_grad(&mi.source, &mi.dec_in, &mi.targets, &mi.mask, dropout, &mut grads)?;
                    Ok((loss, grads))
                })
                .collect::<Result<_, ForwardError>>()?;
            let mut parts = parts.into_iter();
            let (first_loss, mut grads) = parts.next().expect("non-empty batch");
            let mut batch_loss = first_loss;
            for (l, g) in parts {
                batch_loss += l;
                grads.add(&g);
            }
            if !batch_loss.is_finite() || !grads.sq_norm().is_finite() {
                return Err(TrainError::Diverged { epoch, batch });
            }
            grads.scale(lit(1.0 / chunk.len() as f64));
            adam.step(&mut model.params, &mut grads);
            epoch_loss += batch_loss.to_f64_lossy();
        }
        curve.push(epoch_loss / inputs.len() as f64);
        if let Some(target) = opt.stop_at_label_accuracy {
            let acc = teacher_forced_label_accuracy(&model, &inputs)?;
            accuracy = Some(acc);
            if acc >= target {
                break;
            }
        }
    }

    let meta = TrainingMeta {
        epochs: curve.len(),
        final_loss: *curve.last().expect("at least one epoch"),
        loss_curve: curve.clone(),
        seed: config.seed,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_model(&model, vocab, schema.clone(), meta),
        loss_curve: curve,
        label_accuracy: accuracy,
        n_examples: inputs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::cues::NoCueBackend;

    #[test]
    fn empty_corpus_rejected() {
        let c = Corpus {
            split: Split::Train,
            dialogues: vec![],
        };
        let r = train::<f32>(&c, &NoCueBackend, &SegmentSchema::default(), &ModelConfig::micro(), &TrainOptions::default());
        assert!(matches!(r, Err(TrainError::EmptyCorpus)));
    }

    #[test]
    fn csv_shape() {
        assert_eq!(loss_curve_csv(&[2.5, 1.25]), "epoch,loss\n1,2.5\n2,1.25\n");
    }

    #[test]
    fn label_ranges_cover_label_tokens() {
        assert_eq!(label_range(8), None);
        assert_eq!(label_range(9), Some(9..16));
        assert_eq!(label_range(25), Some(16..26));
        assert_eq!(label_range(32), Some(26..33));
        assert_eq!(label_range(33), None);
    }
}

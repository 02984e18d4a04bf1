use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bertscore::{bertscore, embedder_by_name};
use super::classify::{classify_eval, ClassificationResult};
use super::perplexity::{perplexity, perplexity_item};
use super::text::{bleu, rouge_l};
use super::EvalError;
use crate::model::generator::Generator;
use crate::model::vocab::Vocab;
use crate::reasoning::generate::{sequential_generate, DecodeConfig, PipelineOutput};
use crate::reasoning::history::{DialogueExample, Gold};
use crate::reasoning::schema::{LossPolicy, SegmentSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub decode: DecodeConfig,
    /// Generate turns on the rayon pool; results keep input order.
    pub parallel: bool,
    /// Embedding provider for BERTScore; `None` skips it.
    pub bertscore_provider: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            decode: DecodeConfig::default(),
            parallel: true,
            bertscore_provider: Some(super::bertscore::HASHED_PROVIDER.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnPrediction {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub output: PipelineOutput,
    pub gold: Gold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub bleu2: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub perplexity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bertscore: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_turns: usize,
    pub loss_policy: LossPolicy,
    /// `None` for stages removed from the schema.
    pub user_emotion: Option<ClassificationResult>,
    pub strategy: Option<ClassificationResult>,
    pub system_emotion: Option<ClassificationResult>,
    /// Fraction of emitted label spans equal to gold.
    pub label_exact_match: Option<f64>,
    pub generation: GenerationResult,
    pub n_truncated: usize,
}

pub fn predict(
    generator: &dyn Generator,
    vocab: &Vocab,
    examples: &[DialogueExample],
    schema: &SegmentSchema,
    opts: &EvalOptions,
) -> Result<Vec<TurnPrediction>, EvalError> {
    let one = |ex: &DialogueExample| -> Result<TurnPrediction, EvalError> {
        Ok(TurnPrediction {
            dialogue_id: ex.dialogue_id.clone(),
            turn_index: ex.turn_index,
            output: sequential_generate(generator, &ex.history, schema, vocab, &opts.decode)?,
            gold: ex.gold.clone(),
        })
    };
    if opts.parallel {
        examples.par_iter().map(one).collect()
    } else {
        examples.iter().map(one).collect()
    }
}

fn stage<L: crate::corpus::Label>(
    pairs: impl Iterator<Item = (Option<L>, L)>,
) -> Result<Option<ClassificationResult>, EvalError> {
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for (p, g) in pairs {
        match p {
            Some(p) => {
                preds.push(p);
                golds.push(g);
            }
            None => return Ok(None),
        }
    }
    classify_eval(&preds, &golds).map(Some)
}

/// Score predictions against gold labels and responses.
pub fn score(
    predictions: &[TurnPrediction],
    generator: &dyn Generator,
    vocab: &Vocab,
    examples: &[DialogueExample],
    schema: &SegmentSchema,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty("evaluation turns"));
    }
    let user_emotion = stage(predictions.iter().map(|p| (p.output.user_emotion, p.gold.user_emotion)))?;
    let strategy = stage(predictions.iter().map(|p| (p.output.strategy, p.gold.strategy)))?;
    let system_emotion = stage(predictions.iter().map(|p| (p.output.system_emotion, p.gold.system_emotion)))?;

    let mut hits = 0usize;
    let mut spans = 0usize;
    for p in predictions {
        let o = &p.output;
        for hit in [
            o.user_emotion.map(|l| l == p.gold.user_emotion),
            o.strategy.map(|l| l == p.gold.strategy),
            o.system_emotion.map(|l| l == p.gold.system_emotion),
        ]
        .into_iter()
        .flatten()
        {
            spans += 1;
            hits += usize::from(hit);
        }
    }

    let cands: Vec<String> = predictions.iter().map(|p| p.output.response.clone()).collect();
    let refs: Vec<String> = predictions.iter().map(|p| p.gold.response.clone()).collect();
    let items = examples
        .iter()
        .map(|ex| perplexity_item(ex, schema, vocab))
        .collect::<Result<Vec<_>, _>>()?;
    let bert = match &opts.bertscore_provider {
        Some(name) => Some(bertscore(&cands, &refs, embedder_by_name(name)?.as_ref())?),
        None => None,
    };
    Ok(EvalReport {
        n_turns: predictions.len(),
        loss_policy: schema.loss_policy,
        user_emotion,
        strategy,
        system_emotion,
        label_exact_match: (spans > 0).then(|| hits as f64 / spans as f64),
        generation: GenerationResult {
            bleu2: bleu(&cands, &refs, 2)?,
            bleu4: bleu(&cands, &refs, 4)?,
            rouge_l: rouge_l(&cands, &refs)?,
            perplexity: perplexity(generator, &items)?,
            bertscore: bert,
        },
        n_truncated: predictions.iter().filter(|p| p.output.truncated).count(),
    })
}

/// Run the sequential pipeline on every example and score it.
pub fn evaluate(
    generator: &dyn Generator,
    vocab: &Vocab,
    examples: &[DialogueExample],
    schema: &SegmentSchema,
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<TurnPrediction>), EvalError> {
    let predictions = predict(generator, vocab, examples, schema, opts)?;
    let report = score(&predictions, generator, vocab, examples, schema, opts)?;
    Ok((report, predictions))
}

pub mod ablation;
pub mod bertscore;
pub mod classify;
pub mod human;
pub mod perplexity;
pub mod pipeline;
pub mod text;

pub use ablation::{render_ablation_table, run_ablation, AblationReport, AblationSettings, TaskMetrics, TABLE_COLUMNS};
pub use bertscore::{bertscore, bertscore_pair, embedder_by_name, Embedder, HashedNgramEmbedder, HASHED_PROVIDER};
pub use classify::{classify_eval, classify_eval_indices, classify_eval_str, ClassificationResult, LabelScores};
pub use human::{human_eval_tally, Dimension, HumanEvalTally, Verdict, WinTieLoss};
pub use perplexity::{perplexity, perplexity_item, PerplexityItem};
pub use pipeline::{evaluate, predict, score, EvalOptions, EvalReport, GenerationResult, TurnPrediction};
pub use text::{bleu, rouge_l, rouge_l_pair, ROUGE_BETA};

use crate::cues::CueError;
use crate::model::checkpoint::CheckpointError;
use crate::model::generator::GeneratorError;
use crate::model::train::TrainError;
use crate::reasoning::generate::GenerateError;
use crate::reasoning::linearize::LinearizeError;
use crate::reasoning::schema::SchemaError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("label {0:?} outside the label set")]
    UnknownLabel(String),
    #[error("unknown embedding provider {0:?}")]
    UnknownProvider(String),
    #[error("unknown evaluation dimension {0:?}")]
    UnknownDimension(String),
    #[error("unknown verdict {0:?}")]
    UnknownVerdict(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

use serde_json::{json, Value};

use mesc_core::corpus::{CorpusError, KappaError};
use mesc_core::cues::CueError;
use mesc_core::eval::EvalError;
use mesc_core::model::{CheckpointError, TrainError};
use mesc_core::reasoning::{GenerateError, SchemaError, SessionError};

use crate::session::ManagerError;

/// Any failure surfaced by a command. Rendered as one JSON record on stderr.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Kappa(#[from] KappaError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Manager(#[from] ManagerError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid input: {0}")]
    Input(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Corpus(_) => "corpus",
            CliError::Kappa(_) => "kappa",
            CliError::Schema(_) => "schema",
            CliError::Cue(_) => "cue",
            CliError::Train(_) => "train",
            CliError::Eval(_) => "eval",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Generate(_) => "generate",
            CliError::Session(_) => "session",
            CliError::Manager(_) => "session",
            CliError::Io { .. } => "io",
            CliError::Input(_) => "input",
        }
    }

    /// `{"error": {"kind": ..., "message": ..., ...}}`
    pub fn record(&self) -> Value {
        let mut err = json!({
            "kind": self.kind(),
            "message": self.to_string(),
        });
        if let CliError::Corpus(c) = self {
            err["class"] = json!(c.kind.as_str());
            err["line"] = json!(c.line);
            err["dialogue"] = json!(c.dialogue);
            err["turn"] = json!(c.turn);
            err["field"] = json!(c.field);
        }
        json!({ "error": err })
    }
}

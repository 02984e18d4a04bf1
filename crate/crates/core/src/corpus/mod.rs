//! MESC-format corpora: schema, parsing and validation, statistics,
//! annotation agreement and strategy-phase analysis.

mod kappa;
mod labels;
mod parse;
mod phase;
mod scenario;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use kappa::{agreement_report, fleiss_kappa, AgreementReport, KappaError, LabelAgreement};
pub use labels::{EmotionLabel, Label, MediaKind, Speaker, StrategyLabel, UnknownLabel};
pub use parse::{
    parse_corpus, parse_corpus_with, read_corpus_file, serialize_corpus, CorpusError,
    CorpusErrorKind, SCHEMA_VERSION,
};
pub use phase::{strategy_phase_distribution, PhaseDistribution};
pub use scenario::ScenarioRegistry;
pub use stats::{compute_stats, CorpusStats, RoleCounts};

/// A time span of a media file aligned to one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub media_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub kind: MediaKind,
}

/// One first-pass annotator judgment, kept alongside the adjudicated label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub emotion: EmotionLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    /// 1-based position within the dialogue.
    pub index: usize,
    pub speaker: Speaker,
    pub utterance: String,
    pub emotion: EmotionLabel,
    /// Present exactly on therapist turns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyLabel>,
    #[serde(default)]
    pub clips: Vec<ClipRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_annotations: Option<BTreeMap<String, RawAnnotation>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub scenario: String,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub split: Split,
    pub dialogues: Vec<Dialogue>,
}

impl Corpus {
    pub fn turns(&self) -> impl Iterator<Item = (&Dialogue, &Turn)> {
        self.dialogues
            .iter()
            .flat_map(|d| d.turns.iter().map(move |t| (d, t)))
    }
}

/// Whitespace tokenization used for utterance-length statistics.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

//! One live conversation: turn requests in, pipeline outputs out.

use serde::{Deserialize, Serialize};

use super::generate::{sequential_generate, DecodeConfig, GenerateError, PipelineOutput};
use super::history::{compose_for_schema, History, HistoryEntry, HistoryError, ResponseRecord};
use super::schema::{apply_ablation, AblationVariant, SchemaError, SegmentSchema};
use crate::corpus::ClipRef;
use crate::cues::{extract_cue, CueBackend, CueError, EmotionCue};
use crate::model::generator::Generator;
use crate::model::vocab::Vocab;

/// What to do when the cue backend fails mid-conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CueFailurePolicy {
    /// Continue with an empty cue.
    #[default]
    Proceed,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRequest {
    pub utterance: String,
    #[serde(default)]
    pub clips: Vec<ClipRef>,
}

impl TurnRequest {
    pub fn text(utterance: impl Into<String>) -> Self {
        Self {
            utterance: utterance.into(),
            clips: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SessionConfig {
    pub schema: SegmentSchema,
    pub decode: DecodeConfig,
    pub variant: Option<AblationVariant>,
    pub cue_policy: CueFailurePolicy,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("generator produced an empty response")]
    EmptyResponse,
}

/// History plus the resolved settings for one conversation. A failed turn
/// leaves the history untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub schema: SegmentSchema,
    pub decode: DecodeConfig,
    pub cue_policy: CueFailurePolicy,
    pub entries: Vec<HistoryEntry>,
}

impl Conversation {
    pub fn new(config: &SessionConfig) -> Result<Self, SessionError> {
        let schema = match config.variant {
            Some(v) => apply_ablation(&config.schema, v)?,
            None => {
                config.schema.validate()?;
                config.schema.clone()
            }
        };
        Ok(Self {
            schema,
            decode: config.decode,
            cue_policy: config.cue_policy,
            entries: Vec::new(),
        })
    }

    pub fn n_turns(&self) -> usize {
        self.entries.len() / 2
    }

    pub fn post_turn(
        &mut self,
        req: &TurnRequest,
        generator: &dyn Generator,
        vocab: &Vocab,
        cues: &dyn CueBackend,
    ) -> Result<PipelineOutput, SessionError> {
        let text_ablated = !self.schema.include_utterance;
        if req.utterance.trim().is_empty() && !(text_ablated && !req.clips.is_empty()) {
            return Err(SessionError::EmptyUtterance);
        }
        let index = self.entries.last().map_or(1, |e| e.index() + 1);
        let cue = if self.schema.include_cue {
            match extract_cue(&req.clips, cues, index) {
                Ok(c) => c,
                Err(_) if self.cue_policy == CueFailurePolicy::Proceed => EmotionCue::none(index),
                Err(e) => return Err(e.into()),
            }
        } else {
            EmotionCue::none(index)
        };
        let context = compose_for_schema(cue, req.utterance.trim(), &self.schema)?;

        let mut entries = self.entries.clone();
        entries.push(HistoryEntry::Context { index, context });
        let history = History::new(entries)?;
        let out = sequential_generate(generator, &history, &self.schema, vocab, &self.decode)?;
        if out.response.trim().is_empty() {
            return Err(SessionError::EmptyResponse);
        }

        let mut entries = history.entries;
        entries.push(HistoryEntry::Response {
            index: index + 1,
            record: ResponseRecord {
                text: out.response.clone(),
                emotion: out.system_emotion,
                strategy: out.strategy,
            },
        });
        self.entries = entries;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{MediaKind, StrategyLabel};
    use crate::cues::{CueSource, CuePrompt, MockCueBackend};
    use crate::model::adapter::ScriptedGenerator;

    struct Down;

    impl CueBackend for Down {
        fn source(&self) -> CueSource {
            CueSource::External
        }

        fn answer(&self, _: &CuePrompt) -> Result<(String, CueSource), CueError> {
            Err(CueError::Transport {
                backend: CueSource::External,
                detail: "unreachable".into(),
            })
        }
    }

    fn setup() -> (Vocab, ScriptedGenerator) {
        let vocab = Vocab::build(["tell me more"], 1);
        let v = vocab.len();
        let resp = vocab.special("<resp>").unwrap();
        let strat = vocab.special("<strat>").unwrap();
        let g = ScriptedGenerator::new(v)
            .with_choice(strat, vocab.strategy(StrategyLabel::OpenQuestions))
            .with_choice(resp, vocab.word("tell"))
            .with_choice(vocab.word("tell"), vocab.word("me"))
            .with_choice(vocab.word("me"), vocab.word("more"))
            .with_choice(vocab.word("more"), vocab.end());
        (vocab, g)
    }

    fn clip() -> ClipRef {
        ClipRef {
            media_id: "m".into(),
            start_s: 0.0,
            end_s: 1.0,
            kind: MediaKind::Video,
        }
    }

    #[test]
    fn turn_appends_two_entries() {
        let (vocab, g) = setup();
        let mut c = Conversation::new(&SessionConfig::default()).unwrap();
        let out = c.post_turn(&TurnRequest::text("I can't sleep."), &g, &vocab, &MockCueBackend).unwrap();
        assert_eq!(out.response, "tell me more");
        assert_eq!(out.strategy, Some(StrategyLabel::OpenQuestions));
        assert_eq!(c.entries.len(), 2);
        c.post_turn(&TurnRequest::text("Still awake."), &g, &vocab, &MockCueBackend).unwrap();
        assert_eq!(c.entries.len(), 4);
        assert_eq!(c.entries[2].index(), 3);
    }

    #[test]
    fn cue_outage_policy() {
        let (vocab, g) = setup();
        let req = TurnRequest {
            utterance: "hello".into(),
            clips: vec![clip()],
        };
        let mut c = Conversation::new(&SessionConfig::default()).unwrap();
        c.post_turn(&req, &g, &vocab, &Down).unwrap();
        match &c.entries[0] {
            HistoryEntry::Context { context, .. } => assert_eq!(context.cue.backend, CueSource::None),
            other => panic!("{other:?}"),
        }
        let mut strict = Conversation::new(&SessionConfig {
            cue_policy: CueFailurePolicy::Fail,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(strict.post_turn(&req, &g, &vocab, &Down), Err(SessionError::Cue(_))));
        assert!(strict.entries.is_empty());
    }

    #[test]
    fn empty_utterance_rules() {
        let (vocab, g) = setup();
        let mut c = Conversation::new(&SessionConfig::default()).unwrap();
        assert_eq!(
            c.post_turn(&TurnRequest::text("  "), &g, &vocab, &MockCueBackend),
            Err(SessionError::EmptyUtterance)
        );
        let mut no_text = Conversation::new(&SessionConfig {
            variant: Some(AblationVariant::NoText),
            ..Default::default()
        })
        .unwrap();
        let req = TurnRequest {
            utterance: String::new(),
            clips: vec![clip()],
        };
        no_text.post_turn(&req, &g, &vocab, &MockCueBackend).unwrap();
        assert_eq!(no_text.n_turns(), 1);
    }
}

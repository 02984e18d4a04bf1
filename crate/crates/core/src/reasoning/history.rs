use serde::{Deserialize, Serialize};

use super::schema::SegmentSchema;
use crate::corpus::{Dialogue, EmotionLabel, Speaker, StrategyLabel};
use crate::cues::{compose_turn_context_masked, extract_cue, CueBackend, CueError, EmotionCue, TurnContext};

/// A past therapist turn as seen by later turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<EmotionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HistoryEntry {
    Context { index: usize, context: TurnContext },
    Response { index: usize, record: ResponseRecord },
}

impl HistoryEntry {
    pub fn index(&self) -> usize {
        match self {
            HistoryEntry::Context { index, .. } | HistoryEntry::Response { index, .. } => *index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HistoryError {
    #[error("empty history")]
    Empty,
    #[error("history must end with a turn context")]
    EndsWithResponse,
    #[error("history indices must strictly increase (entry {0})")]
    NonIncreasing(usize),
    #[error("empty response text at entry {0}")]
    EmptyResponse(usize),
}

/// Dialogue context up to and including the current user turn.
///
/// Client contexts and therapist responses usually alternate, but corpora
/// contain back-to-back turns by one speaker, so only index order and the
/// final context entry are enforced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct History {
    pub entries: Vec<HistoryEntry>,
}

impl History {
    pub fn new(entries: Vec<HistoryEntry>) -> Result<Self, HistoryError> {
        let h = Self { entries };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), HistoryError> {
        let last = self.entries.last().ok_or(HistoryError::Empty)?;
        if !matches!(last, HistoryEntry::Context { .. }) {
            return Err(HistoryError::EndsWithResponse);
        }
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 && e.index() <= self.entries[i - 1].index() {
                return Err(HistoryError::NonIncreasing(i));
            }
            if let HistoryEntry::Response { record, .. } = e {
                if record.text.trim().is_empty() {
                    return Err(HistoryError::EmptyResponse(i));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_index(&self) -> usize {
        self.entries.last().map_or(1, |e| e.index() + 1)
    }
}

/// Reference outputs for one therapist turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gold {
    pub user_emotion: EmotionLabel,
    pub strategy: StrategyLabel,
    pub system_emotion: EmotionLabel,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueExample {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub history: History,
    pub gold: Gold,
}

/// Compose one client turn, tolerating a context emptied by ablation.
pub fn compose_for_schema(
    cue: EmotionCue,
    utterance: &str,
    schema: &SegmentSchema,
) -> Result<TurnContext, CueError> {
    match compose_turn_context_masked(cue.clone(), utterance, schema.include_cue, schema.include_utterance) {
        Err(CueError::EmptyContext) if !(schema.include_cue && schema.include_utterance) => Ok(TurnContext {
            cue: EmotionCue::none(cue.turn_index),
            utterance: String::new(),
            rendered: String::new(),
        }),
        other => other,
    }
}

/// One training example per therapist turn that directly follows a client turn.
pub fn dialogue_examples(
    dialogue: &Dialogue,
    cues: &dyn CueBackend,
    schema: &SegmentSchema,
) -> Result<Vec<DialogueExample>, CueError> {
    let mut entries = Vec::new();
    let mut last_client_emotion = None;
    let mut out = Vec::new();
    for turn in &dialogue.turns {
        match turn.speaker {
            Speaker::Client => {
                let cue = if schema.include_cue {
                    extract_cue(&turn.clips, cues, turn.index)?
                } else {
                    EmotionCue::none(turn.index)
                };
                let context = compose_for_schema(cue, &turn.utterance, schema)?;
                entries.push(HistoryEntry::Context {
                    index: turn.index,
                    context,
                });
                last_client_emotion = Some(turn.emotion);
            }
            Speaker::Therapist => {
                let follows_client = matches!(entries.last(), Some(HistoryEntry::Context { .. }));
                if let (true, Some(user_emotion), Some(strategy)) = (follows_client, last_client_emotion, turn.strategy) {
                    out.push(DialogueExample {
                        dialogue_id: dialogue.id.clone(),
                        turn_index: turn.index,
                        history: History {
                            entries: entries.clone(),
                        },
                        gold: Gold {
                            user_emotion,
                            strategy,
                            system_emotion: turn.emotion,
                            response: turn.utterance.clone(),
                        },
                    });
                }
                entries.push(HistoryEntry::Response {
                    index: turn.index,
                    record: ResponseRecord {
                        text: turn.utterance.clone(),
                        emotion: Some(turn.emotion),
                        strategy: turn.strategy,
                    },
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cues::{CueSource, MockCueBackend};

    fn ctx(index: usize, text: &str) -> HistoryEntry {
        HistoryEntry::Context {
            index,
            context: TurnContext {
                cue: EmotionCue {
                    text: String::new(),
                    backend: CueSource::None,
                    turn_index: index,
                },
                utterance: text.into(),
                rendered: format!("[UTT] {text}"),
            },
        }
    }

    fn resp(index: usize, text: &str) -> HistoryEntry {
        HistoryEntry::Response {
            index,
            record: ResponseRecord {
                text: text.into(),
                emotion: None,
                strategy: None,
            },
        }
    }

    #[test]
    fn history_invariants() {
        assert_eq!(History::new(vec![]), Err(HistoryError::Empty));
        assert!(History::new(vec![ctx(1, "hi")]).is_ok());
        assert_eq!(
            History::new(vec![ctx(1, "hi"), resp(2, "ok")]),
            Err(HistoryError::EndsWithResponse)
        );
        assert_eq!(
            History::new(vec![ctx(2, "hi"), resp(2, "ok"), ctx(3, "x")]),
            Err(HistoryError::NonIncreasing(1))
        );
        assert!(History::new(vec![resp(1, "hello"), ctx(2, "hi")]).is_ok());
    }

    #[test]
    fn entries_serialize_tagged() {
        let json = serde_json::to_string(&resp(4, "ok")).unwrap();
        assert_eq!(json, r#"{"type":"response","index":4,"record":{"text":"ok"}}"#);
    }

    #[test]
    fn examples_follow_client_turns() {
        let text = r#"#mesc-schema:1
{"id":"d","scenario":"anxiety","turns":[{"index":1,"speaker":"client","utterance":"a","emotion":"fear","clips":[{"media_id":"m","start_s":0.0,"end_s":1.0,"kind":"video"}]},{"index":2,"speaker":"therapist","utterance":"b","emotion":"neutral","strategy":"approval","clips":[]},{"index":3,"speaker":"therapist","utterance":"c","emotion":"joy","strategy":"others","clips":[]},{"index":4,"speaker":"client","utterance":"d","emotion":"joy","clips":[]},{"index":5,"speaker":"therapist","utterance":"e","emotion":"joy","strategy":"restatement","clips":[]}]}
"#;
        let corpus = crate::corpus::parse_corpus(text.as_bytes(), "1").unwrap();
        let ex = dialogue_examples(&corpus.dialogues[0], &MockCueBackend, &SegmentSchema::default()).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].turn_index, 2);
        assert_eq!(ex[0].gold.user_emotion, EmotionLabel::Fear);
        assert_eq!(ex[0].history.len(), 1);
        match &ex[0].history.entries[0] {
            HistoryEntry::Context { context, .. } => {
                assert_eq!(context.rendered, "[CUE] [[mock cue for m@0.0] [UTT] a")
            }
            _ => panic!(),
        }
        assert_eq!(ex[1].turn_index, 5);
        assert_eq!(ex[1].history.len(), 4);
        assert_eq!(ex[1].gold.strategy, StrategyLabel::Restatement);
        ex.iter().for_each(|e| e.history.validate().unwrap());
    }
}

//! Multi-task sequence layout.
//!
//! A therapist turn becomes one token sequence
//! `HIST USR_EMO STRAT SYS_EMO RESP`, each span opened by its role marker.
//! Label spans hold exactly one label token; the response span ends with
//! the end token. The encoder reads the history span; the decoder is
//! teacher-forced on the rest (or on everything, under the full-sequence
//! loss policy).

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::history::{Gold, History, HistoryEntry, HistoryError};
use super::schema::{LossPolicy, Role, SchemaError, SegmentSchema};
use crate::cues::escape_segment;
use crate::model::vocab::{TokenId, Vocab};

/// Word that introduces a past therapist response inside the history span.
pub const RSP_WORD: &str = "[RSP]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinearizeError {
    #[error("marker {0:?} is not an atomic vocabulary entry")]
    MarkerNotInVocab(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    History(#[from] HistoryError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub tokens: Vec<TokenId>,
    pub roles: Vec<Role>,
    pub loss_mask: Vec<bool>,
}

/// Teacher-forcing view of a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInputs {
    pub source: Vec<TokenId>,
    pub dec_in: Vec<TokenId>,
    pub targets: Vec<TokenId>,
    pub mask: Vec<bool>,
}

impl TrainingSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Maximal runs of equal role, in order.
    pub fn spans(&self) -> Vec<(Role, Range<usize>)> {
        let mut out: Vec<(Role, Range<usize>)> = Vec::new();
        for (i, &r) in self.roles.iter().enumerate() {
            match out.last_mut() {
                Some((role, range)) if *role == r => range.end = i + 1,
                _ => out.push((r, i..i + 1)),
            }
        }
        out
    }

    pub fn role_tokens(&self, role: Role) -> Vec<TokenId> {
        self.tokens
            .iter()
            .zip(&self.roles)
            .filter(|(_, &r)| r == role)
            .map(|(&t, _)| t)
            .collect()
    }

    /// Index of the first decoder target under `policy`.
    pub fn decoder_start(&self, policy: LossPolicy) -> usize {
        match policy {
            LossPolicy::FullSequence => 0,
            LossPolicy::TargetsOnly => self.roles.iter().position(|&r| r != Role::Hist).unwrap_or(self.len()),
        }
    }

    pub fn model_inputs(&self, policy: LossPolicy, vocab: &Vocab) -> ModelInputs {
        let mut source = self.role_tokens(Role::Hist);
        if source.is_empty() {
            source.push(vocab.begin());
        }
        let start = self.decoder_start(policy);
        let targets = self.tokens[start..].to_vec();
        let mut dec_in = Vec::with_capacity(targets.len());
        dec_in.push(vocab.begin());
        dec_in.extend_from_slice(&targets[..targets.len().saturating_sub(1)]);
        ModelInputs {
            source,
            dec_in,
            targets,
            mask: self.loss_mask[start..].to_vec(),
        }
    }
}

pub(crate) fn marker_id(vocab: &Vocab, schema: &SegmentSchema, role: Role) -> Result<TokenId, LinearizeError> {
    let m = schema.marker(role);
    vocab
        .special(m)
        .ok_or_else(|| LinearizeError::MarkerNotInVocab(m.to_string()))
}

fn entry_tokens(entry: &HistoryEntry, vocab: &Vocab) -> Vec<TokenId> {
    match entry {
        HistoryEntry::Context { context, .. } => vocab.encode_text(&context.rendered),
        HistoryEntry::Response { record, .. } => {
            vocab.encode_text(&format!("{RSP_WORD} {}", escape_segment(&record.text)))
        }
    }
}

/// History span tokens (marker first), truncated to the schema budget by
/// dropping the oldest entries. The current context is never dropped; if it
/// alone exceeds the budget its most recent tokens are kept.
pub fn encode_history(history: &History, schema: &SegmentSchema, vocab: &Vocab) -> Result<Vec<TokenId>, LinearizeError> {
    history.validate()?;
    if !schema.includes(Role::Hist) {
        return Ok(Vec::new());
    }
    let marker = marker_id(vocab, schema, Role::Hist)?;
    let budget = schema.max_history_tokens.max(2) - 1;
    let per_entry: Vec<Vec<TokenId>> = history.entries.iter().map(|e| entry_tokens(e, vocab)).collect();
    let mut first = 0;
    let mut total: usize = per_entry.iter().map(Vec::len).sum();
    while total > budget && first + 1 < per_entry.len() {
        total -= per_entry[first].len();
        first += 1;
    }
    let mut out = Vec::with_capacity(total.min(budget) + 1);
    out.push(marker);
    for toks in &per_entry[first..] {
        out.extend_from_slice(toks);
    }
    if out.len() > budget + 1 {
        let cut = out.len() - budget;
        out.drain(1..cut);
    }
    Ok(out)
}

/// Build the training sequence for one gold quadruple.
pub fn linearize(
    history: &History,
    gold: &Gold,
    schema: &SegmentSchema,
    vocab: &Vocab,
) -> Result<TrainingSequence, LinearizeError> {
    schema.validate()?;
    let mut seq = TrainingSequence {
        tokens: Vec::new(),
        roles: Vec::new(),
        loss_mask: Vec::new(),
    };
    let hist_mask = schema.loss_policy == LossPolicy::FullSequence;
    for t in encode_history(history, schema, vocab)? {
        seq.tokens.push(t);
        seq.roles.push(Role::Hist);
        seq.loss_mask.push(hist_mask);
    }
    let mut push_span = |role: Role, body: &[TokenId]| -> Result<(), LinearizeError> {
        if !schema.includes(role) {
            return Ok(());
        }
        let marker = marker_id(vocab, schema, role)?;
        for &t in std::iter::once(&marker).chain(body) {
            seq.tokens.push(t);
            seq.roles.push(role);
            seq.loss_mask.push(true);
        }
        Ok(())
    };
    push_span(Role::UsrEmo, &[vocab.user_emotion(gold.user_emotion)])?;
    push_span(Role::Strat, &[vocab.strategy(gold.strategy)])?;
    push_span(Role::SysEmo, &[vocab.system_emotion(gold.system_emotion)])?;
    let mut resp = vocab.encode_text(&gold.response);
    resp.push(vocab.end());
    push_span(Role::Resp, &resp)?;
    Ok(seq)
}

/// Split decoder output into role spans at marker tokens.
pub fn parse_target_spans(
    tokens: &[TokenId],
    schema: &SegmentSchema,
    vocab: &Vocab,
) -> Result<Vec<(Role, Vec<TokenId>)>, LinearizeError> {
    let mut markers = Vec::new();
    for role in Role::ALL {
        markers.push((marker_id(vocab, schema, role)?, role));
    }
    let mut out: Vec<(Role, Vec<TokenId>)> = Vec::new();
    for &t in tokens {
        if let Some(&(_, role)) = markers.iter().find(|(id, _)| *id == t) {
            out.push((role, vec![t]));
        } else if let Some((_, span)) = out.last_mut() {
            span.push(t);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EmotionLabel, StrategyLabel};
    use crate::cues::{CueSource, EmotionCue, TurnContext};

    fn history(texts: &[&str]) -> History {
        let entries = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i % 2 == 0 {
                    HistoryEntry::Context {
                        index: i + 1,
                        context: TurnContext {
                            cue: EmotionCue {
                                text: String::new(),
                                backend: CueSource::None,
                                turn_index: i + 1,
                            },
                            utterance: t.to_string(),
                            rendered: format!("[UTT] {t}"),
                        },
                    }
                } else {
                    HistoryEntry::Response {
                        index: i + 1,
                        record: super::super::history::ResponseRecord {
                            text: t.to_string(),
                            emotion: None,
                            strategy: None,
                        },
                    }
                }
            })
            .collect();
        History::new(entries).unwrap()
    }

    fn gold() -> Gold {
        Gold {
            user_emotion: EmotionLabel::Depression,
            strategy: StrategyLabel::OpenQuestions,
            system_emotion: EmotionLabel::Neutral,
            response: "Tell me more.".into(),
        }
    }

    fn vocab() -> Vocab {
        Vocab::build(["[UTT] [RSP] I can't sleep. Tell me more. a b c d e f"], 1)
    }

    #[test]
    fn fixed_role_order_and_single_label_tokens() {
        let v = vocab();
        let seq = linearize(&history(&["I can't sleep."]), &gold(), &SegmentSchema::default(), &v).unwrap();
        let order: Vec<Role> = seq.spans().into_iter().map(|(r, _)| r).collect();
        assert_eq!(order, Role::ALL.to_vec());
        assert_eq!(seq.role_tokens(Role::UsrEmo), vec![v.special("<usr_emo>").unwrap(), v.user_emotion(EmotionLabel::Depression)]);
        assert_eq!(seq.role_tokens(Role::Strat).len(), 2);
        assert_eq!(seq.role_tokens(Role::SysEmo).len(), 2);
        assert_eq!(*seq.role_tokens(Role::Resp).last().unwrap(), v.end());
        assert_eq!(seq.tokens.len(), seq.roles.len());
        assert_eq!(seq.tokens.len(), seq.loss_mask.len());
    }

    #[test]
    fn loss_policies() {
        let v = vocab();
        let h = history(&["I can't sleep."]);
        let seq = linearize(&h, &gold(), &SegmentSchema::default(), &v).unwrap();
        for (r, m) in seq.roles.iter().zip(&seq.loss_mask) {
            assert_eq!(*m, *r != Role::Hist);
        }
        let full = SegmentSchema {
            loss_policy: LossPolicy::FullSequence,
            ..SegmentSchema::default()
        };
        let seq = linearize(&h, &gold(), &full, &v).unwrap();
        assert!(seq.loss_mask.iter().all(|&m| m));
    }

    #[test]
    fn excluded_span_absent() {
        let v = vocab();
        let mut s = SegmentSchema::default();
        s.set_included(Role::UsrEmo, false).unwrap();
        let seq = linearize(&history(&["a"]), &gold(), &s, &v).unwrap();
        assert!(!seq.roles.contains(&Role::UsrEmo));
        assert!(!seq.tokens.contains(&v.special("<usr_emo>").unwrap()));
    }

    #[test]
    fn unknown_marker_is_an_error() {
        let v = vocab();
        let mut s = SegmentSchema::default();
        s.markers[3] = "<mood>".into();
        assert_eq!(
            linearize(&history(&["a"]), &gold(), &s, &v),
            Err(LinearizeError::MarkerNotInVocab("<mood>".into()))
        );
    }

    #[test]
    fn truncation_drops_oldest_but_keeps_current() {
        let v = vocab();
        let mut s = SegmentSchema::default();
        let h = history(&["a b c", "d e", "f"]);
        s.max_history_tokens = 5; // marker + "[UTT] f" + one older entry is too much
        let toks = encode_history(&h, &s, &v).unwrap();
        assert_eq!(toks, vec![v.special("<hist>").unwrap(), v.word("[UTT]"), v.word("f")]);
        s.max_history_tokens = 2;
        let toks = encode_history(&h, &s, &v).unwrap();
        assert_eq!(toks, vec![v.special("<hist>").unwrap(), v.word("f")]);
        s.max_history_tokens = 128;
        assert_eq!(encode_history(&h, &s, &v).unwrap().len(), 1 + 4 + 3 + 2);
    }

    #[test]
    fn teacher_forcing_view() {
        let v = vocab();
        let seq = linearize(&history(&["a"]), &gold(), &SegmentSchema::default(), &v).unwrap();
        let mi = seq.model_inputs(LossPolicy::TargetsOnly, &v);
        assert_eq!(mi.source, seq.role_tokens(Role::Hist));
        assert_eq!(mi.dec_in[0], v.begin());
        assert_eq!(&mi.dec_in[1..], &mi.targets[..mi.targets.len() - 1]);
        assert!(mi.mask.iter().all(|&m| m));
        let spans = parse_target_spans(&mi.targets, &SegmentSchema::default(), &v).unwrap();
        assert_eq!(spans.len(), 4);
    }
}

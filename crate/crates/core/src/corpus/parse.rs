//! Line-delimited corpus files.
//!
//! ```text
//! #mesc-schema:1
//! #split:train
//! {"id":"d01","scenario":"ptsd","turns":[...]}
//! ```
//!
//! One dialogue object per line. The `#split` header is optional and defaults
//! to `train`. [`serialize_corpus`] writes the canonical form, which parses
//! back to an identical byte stream.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use super::{
    ClipRef, Corpus, Dialogue, EmotionLabel, MediaKind, RawAnnotation, ScenarioRegistry, Speaker,
    Split, StrategyLabel, Turn,
};

pub const SCHEMA_VERSION: &str = "1";

const SCHEMA_PREFIX: &str = "#mesc-schema:";
const SPLIT_PREFIX: &str = "#split:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorpusErrorKind {
    Io,
    UnsupportedSchema,
    MalformedRecord,
    DuplicateDialogueId,
    UnknownScenario,
    TooFewTurns,
    MissingSpeakerRole,
    NonConsecutiveIndex,
    UnknownSpeaker,
    EmptyUtterance,
    UnknownEmotion,
    UnknownStrategy,
    StrategyOnClientTurn,
    MissingTherapistStrategy,
    UnknownMediaKind,
    NonMonotoneClipTimes,
}

impl CorpusErrorKind {
    pub fn as_str(self) -> &'static str {
        use CorpusErrorKind::*;
        match self {
            Io => "io error",
            UnsupportedSchema => "unsupported schema version",
            MalformedRecord => "malformed record",
            DuplicateDialogueId => "duplicate dialogue id",
            UnknownScenario => "unknown scenario",
            TooFewTurns => "too few turns",
            MissingSpeakerRole => "missing speaker role",
            NonConsecutiveIndex => "non-consecutive turn index",
            UnknownSpeaker => "unknown speaker",
            EmptyUtterance => "empty utterance",
            UnknownEmotion => "unknown emotion label",
            UnknownStrategy => "unknown strategy label",
            StrategyOnClientTurn => "strategy on client turn",
            MissingTherapistStrategy => "missing strategy on therapist turn",
            UnknownMediaKind => "unknown media kind",
            NonMonotoneClipTimes => "non-monotone clip times",
        }
    }
}

/// First violation found while reading a corpus, with its location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusError {
    pub kind: CorpusErrorKind,
    /// 1-based line number in the input stream.
    pub line: usize,
    pub dialogue: Option<String>,
    pub turn: Option<usize>,
    pub field: Option<&'static str>,
    pub detail: String,
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at line {}", self.kind.as_str(), self.line)?;
        let mut loc = Vec::new();
        if let Some(d) = &self.dialogue {
            loc.push(format!("dialogue {d}"));
        }
        if let Some(t) = self.turn {
            loc.push(format!("turn {t}"));
        }
        if let Some(field) = self.field {
            loc.push(format!("field {field}"));
        }
        if !loc.is_empty() {
            write!(f, " ({})", loc.join(", "))?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

impl std::error::Error for CorpusError {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDialogue {
    id: String,
    scenario: String,
    turns: Vec<RawTurn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTurn {
    index: usize,
    speaker: String,
    utterance: String,
    emotion: String,
    #[serde(default)]
    strategy: Option<String>,
    #[serde(default)]
    clips: Vec<RawClip>,
    #[serde(default)]
    raw_annotations: Option<BTreeMap<String, RawAnn>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClip {
    media_id: String,
    start_s: f64,
    end_s: f64,
    kind: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnn {
    emotion: String,
    #[serde(default)]
    strategy: Option<String>,
}

struct Ctx<'a> {
    line: usize,
    dialogue: Option<&'a str>,
    turn: Option<usize>,
}

impl Ctx<'_> {
    fn err(&self, kind: CorpusErrorKind, field: Option<&'static str>, detail: impl Into<String>) -> CorpusError {
        CorpusError {
            kind,
            line: self.line,
            dialogue: self.dialogue.map(str::to_string),
            turn: self.turn,
            field,
            detail: detail.into(),
        }
    }
}

/// Parse a corpus stream against the default scenario registry.
pub fn parse_corpus<R: Read>(stream: R, schema_version: &str) -> Result<Corpus, CorpusError> {
    parse_corpus_with(stream, schema_version, &ScenarioRegistry::default())
}

pub fn parse_corpus_with<R: Read>(
    stream: R,
    schema_version: &str,
    scenarios: &ScenarioRegistry,
) -> Result<Corpus, CorpusError> {
    let reader = BufReader::new(stream);
    let mut split = None;
    let mut saw_schema = false;
    let mut dialogues = Vec::new();
    let mut seen_ids = HashSet::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let ctx = Ctx {
            line: lineno,
            dialogue: None,
            turn: None,
        };
        let line = line.map_err(|e| ctx.err(CorpusErrorKind::Io, None, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !saw_schema {
            let Some(version) = trimmed.strip_prefix(SCHEMA_PREFIX) else {
                return Err(ctx.err(
                    CorpusErrorKind::UnsupportedSchema,
                    None,
                    format!("expected header `{SCHEMA_PREFIX}{schema_version}`"),
                ));
            };
            if version != schema_version {
                return Err(ctx.err(
                    CorpusErrorKind::UnsupportedSchema,
                    None,
                    format!("file declares {version:?}, expected {schema_version:?}"),
                ));
            }
            saw_schema = true;
            continue;
        }
        if let Some(name) = trimmed.strip_prefix(SPLIT_PREFIX) {
            if split.is_some() || !dialogues.is_empty() {
                return Err(ctx.err(CorpusErrorKind::MalformedRecord, None, "misplaced split header"));
            }
            split = Some(Split::parse(name).ok_or_else(|| {
                ctx.err(CorpusErrorKind::MalformedRecord, None, format!("unknown split {name:?}"))
            })?);
            continue;
        }
        let raw: RawDialogue = serde_json::from_str(trimmed)
            .map_err(|e| ctx.err(CorpusErrorKind::MalformedRecord, None, e.to_string()))?;
        let dialogue = validate_dialogue(raw, lineno, scenarios)?;
        if !seen_ids.insert(dialogue.id.clone()) {
            let ctx = Ctx {
                line: lineno,
                dialogue: Some(&dialogue.id),
                turn: None,
            };
            return Err(ctx.err(CorpusErrorKind::DuplicateDialogueId, Some("id"), ""));
        }
        dialogues.push(dialogue);
    }

    if !saw_schema {
        return Err(CorpusError {
            kind: CorpusErrorKind::UnsupportedSchema,
            line: 0,
            dialogue: None,
            turn: None,
            field: None,
            detail: "missing schema header".into(),
        });
    }
    Ok(Corpus {
        split: split.unwrap_or(Split::Train),
        dialogues,
    })
}

fn validate_dialogue(
    raw: RawDialogue,
    line: usize,
    scenarios: &ScenarioRegistry,
) -> Result<Dialogue, CorpusError> {
    let id = raw.id;
    let mut ctx = Ctx {
        line,
        dialogue: Some(&id),
        turn: None,
    };
    if id.trim().is_empty() {
        return Err(ctx.err(CorpusErrorKind::MalformedRecord, Some("id"), "empty dialogue id"));
    }
    if !scenarios.contains(&raw.scenario) {
        return Err(ctx.err(CorpusErrorKind::UnknownScenario, Some("scenario"), raw.scenario));
    }
    if raw.turns.len() < 2 {
        return Err(ctx.err(
            CorpusErrorKind::TooFewTurns,
            Some("turns"),
            format!("{} turn(s)", raw.turns.len()),
        ));
    }

    let mut turns = Vec::with_capacity(raw.turns.len());
    for (pos, rt) in raw.turns.into_iter().enumerate() {
        ctx.turn = Some(rt.index);
        if rt.index != pos + 1 {
            return Err(ctx.err(
                CorpusErrorKind::NonConsecutiveIndex,
                Some("index"),
                format!("expected {}", pos + 1),
            ));
        }
        let speaker: Speaker = rt
            .speaker
            .parse()
            .map_err(|_| ctx.err(CorpusErrorKind::UnknownSpeaker, Some("speaker"), rt.speaker.clone()))?;
        if rt.utterance.trim().is_empty() {
            return Err(ctx.err(CorpusErrorKind::EmptyUtterance, Some("utterance"), ""));
        }
        let emotion = parse_emotion(&ctx, &rt.emotion, "emotion")?;
        let strategy = check_strategy(&ctx, speaker, rt.strategy.as_deref(), "strategy", true)?;

        let mut clips = Vec::with_capacity(rt.clips.len());
        for c in rt.clips {
            let kind: MediaKind = c
                .kind
                .parse()
                .map_err(|_| ctx.err(CorpusErrorKind::UnknownMediaKind, Some("clips"), c.kind.clone()))?;
            let ordered = c.start_s.is_finite()
                && c.end_s.is_finite()
                && c.start_s >= 0.0
                && c.end_s > c.start_s;
            if !ordered {
                return Err(ctx.err(
                    CorpusErrorKind::NonMonotoneClipTimes,
                    Some("clips"),
                    format!("{}: [{}, {}]", c.media_id, c.start_s, c.end_s),
                ));
            }
            clips.push(ClipRef {
                media_id: c.media_id,
                start_s: c.start_s,
                end_s: c.end_s,
                kind,
            });
        }

        let raw_annotations = match rt.raw_annotations {
            None => None,
            Some(map) => {
                let mut out = BTreeMap::new();
                for (annotator, ann) in map {
                    let emotion = parse_emotion(&ctx, &ann.emotion, "raw_annotations")?;
                    let strategy =
                        check_strategy(&ctx, speaker, ann.strategy.as_deref(), "raw_annotations", false)?;
                    out.insert(annotator, RawAnnotation { emotion, strategy });
                }
                Some(out)
            }
        };

        turns.push(Turn {
            index: rt.index,
            speaker,
            utterance: rt.utterance,
            emotion,
            strategy,
            clips,
            raw_annotations,
        });
    }

    ctx.turn = None;
    for role in [Speaker::Client, Speaker::Therapist] {
        if !turns.iter().any(|t| t.speaker == role) {
            return Err(ctx.err(CorpusErrorKind::MissingSpeakerRole, Some("turns"), format!("no {role} turn")));
        }
    }

    Ok(Dialogue {
        id: id.clone(),
        scenario: raw.scenario,
        turns,
    })
}

fn parse_emotion(ctx: &Ctx<'_>, s: &str, field: &'static str) -> Result<EmotionLabel, CorpusError> {
    s.parse()
        .map_err(|_| ctx.err(CorpusErrorKind::UnknownEmotion, Some(field), s.to_string()))
}

fn check_strategy(
    ctx: &Ctx<'_>,
    speaker: Speaker,
    s: Option<&str>,
    field: &'static str,
    required_for_therapist: bool,
) -> Result<Option<StrategyLabel>, CorpusError> {
    match (speaker, s) {
        (Speaker::Client, Some(_)) => Err(ctx.err(CorpusErrorKind::StrategyOnClientTurn, Some(field), "")),
        (Speaker::Client, None) => Ok(None),
        (Speaker::Therapist, None) if required_for_therapist => {
            Err(ctx.err(CorpusErrorKind::MissingTherapistStrategy, Some(field), ""))
        }
        (Speaker::Therapist, None) => Ok(None),
        (Speaker::Therapist, Some(s)) => s
            .parse()
            .map(Some)
            .map_err(|_| ctx.err(CorpusErrorKind::UnknownStrategy, Some(field), s.to_string())),
    }
}

/// Canonical text form of a corpus.
pub fn serialize_corpus(corpus: &Corpus) -> String {
    let mut out = format!("{SCHEMA_PREFIX}{SCHEMA_VERSION}\n{SPLIT_PREFIX}{}\n", corpus.split.as_str());
    for d in &corpus.dialogues {
        out.push_str(&serde_json::to_string(d).expect("dialogue serializes"));
        out.push('\n');
    }
    out
}

pub fn read_corpus_file(path: impl AsRef<Path>, scenarios: &ScenarioRegistry) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| CorpusError {
        kind: CorpusErrorKind::Io,
        line: 0,
        dialogue: None,
        turn: None,
        field: None,
        detail: format!("{}: {e}", path.as_ref().display()),
    })?;
    parse_corpus_with(file, SCHEMA_VERSION, scenarios)
}

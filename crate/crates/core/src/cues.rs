//! Emotion cues from audio-visual clips, and the cue-augmented turn context.
//!
//! A cue is free text answering two fixed questions about a clip. Backends
//! either call an external audio-visual model, read a content-addressed
//! cache, or produce a deterministic mock string. The cue is then joined with
//! the user utterance into a single marker-delimited context string.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ClipRef, Label};

pub const QUESTION_1: &str = "What is the emotional state of the speaker?";
pub const QUESTION_2: &str =
    "What life distress might explain the speaker\u{2019}s emotional expression and posture in this video?";

pub const CUE_MARKER: &str = "[CUE]";
pub const UTT_MARKER: &str = "[UTT]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CueError {
    #[error("empty clip set")]
    EmptyClips,
    #[error("{backend} cue backend: transport failure: {detail}")]
    Transport { backend: CueSource, detail: String },
    #[error("{backend} cue backend: cache miss for {key}")]
    CacheMiss { backend: CueSource, key: String },
    #[error("{backend} cue backend: {detail}")]
    Io { backend: CueSource, detail: String },
    #[error("turn context has neither cue nor utterance")]
    EmptyContext,
}

/// Which backend produced a cue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueSource {
    External,
    Cached,
    Mock,
    None,
}

impl fmt::Display for CueSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CueSource::External => "external",
            CueSource::Cached => "cached",
            CueSource::Mock => "mock",
            CueSource::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuePrompt {
    pub question_1: String,
    pub question_2: String,
    pub clips: Vec<ClipRef>,
}

impl CuePrompt {
    /// Hash of the question text, part of the cache key.
    pub fn questions_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.question_1.as_bytes());
        h.update([0u8]);
        h.update(self.question_2.as_bytes());
        hex::encode(h.finalize())
    }

    /// Content address of this prompt: every clip's (media_id, start, end,
    /// kind) plus the questions digest.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.clips {
            h.update(c.media_id.as_bytes());
            h.update([0x1f]);
            h.update(c.start_s.to_le_bytes());
            h.update(c.end_s.to_le_bytes());
            h.update(c.kind.as_str().as_bytes());
            h.update([0x1e]);
        }
        h.update(self.questions_digest().as_bytes());
        hex::encode(h.finalize())
    }
}

pub fn build_cue_prompt(clips: &[ClipRef]) -> Result<CuePrompt, CueError> {
    if clips.is_empty() {
        return Err(CueError::EmptyClips);
    }
    Ok(CuePrompt {
        question_1: QUESTION_1.to_string(),
        question_2: QUESTION_2.to_string(),
        clips: clips.to_vec(),
    })
}

/// The textual cue for one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionCue {
    pub text: String,
    pub backend: CueSource,
    pub turn_index: usize,
}

impl EmotionCue {
    pub fn none(turn_index: usize) -> Self {
        Self {
            text: String::new(),
            backend: CueSource::None,
            turn_index,
        }
    }
}

/// Something that can answer a cue prompt. Implementations must tolerate
/// concurrent calls.
pub trait CueBackend: Send + Sync {
    fn source(&self) -> CueSource;

    /// Answer text plus the backend that actually produced it.
    fn answer(&self, prompt: &CuePrompt) -> Result<(String, CueSource), CueError>;
}

pub fn extract_cue(clips: &[ClipRef], backend: &dyn CueBackend, turn_index: usize) -> Result<EmotionCue, CueError> {
    if clips.is_empty() {
        return Ok(EmotionCue::none(turn_index));
    }
    let prompt = build_cue_prompt(clips)?;
    let (text, source) = backend.answer(&prompt)?;
    Ok(EmotionCue {
        text,
        backend: source,
        turn_index,
    })
}

/// Never produces a cue.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCueBackend;

impl CueBackend for NoCueBackend {
    fn source(&self) -> CueSource {
        CueSource::None
    }

    fn answer(&self, _prompt: &CuePrompt) -> Result<(String, CueSource), CueError> {
        Ok((String::new(), CueSource::None))
    }
}

/// Deterministic stand-in: `[mock cue for <media_id>@<start_s>]` for the first clip.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockCueBackend;

impl MockCueBackend {
    pub fn render(clip: &ClipRef) -> String {
        format!("[mock cue for {}@{:?}]", clip.media_id, clip.start_s)
    }
}

impl CueBackend for MockCueBackend {
    fn source(&self) -> CueSource {
        CueSource::Mock
    }

    fn answer(&self, prompt: &CuePrompt) -> Result<(String, CueSource), CueError> {
        let clip = prompt.clips.first().ok_or(CueError::EmptyClips)?;
        Ok((Self::render(clip), CueSource::Mock))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalCueConfig {
    pub url: String,
    pub timeout: Duration,
    /// Additional attempts after the first failure.
    pub retries: u32,
    /// Separator used when the server returns one answer per question.
    pub answer_separator: String,
}

impl ExternalCueConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(30),
            retries: 1,
            answer_separator: " ".into(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct WireRequest<'a> {
    pub questions: [&'a str; 2],
    pub media: &'a [ClipRef],
}

#[derive(Debug, Deserialize)]
pub struct WireResponse {
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub answers: Option<Vec<String>>,
}

/// Calls an audio-visual model behind a JSON request/response endpoint.
pub struct ExternalCueBackend {
    config: ExternalCueConfig,
    agent: ureq::Agent,
}

impl ExternalCueBackend {
    pub fn new(config: ExternalCueConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Self { config, agent }
    }

    fn attempt(&self, prompt: &CuePrompt) -> Result<String, String> {
        let body = WireRequest {
            questions: [&prompt.question_1, &prompt.question_2],
            media: &prompt.clips,
        };
        let resp: WireResponse = self
            .agent
            .post(&self.config.url)
            .send_json(&body)
            .map_err(|e| e.to_string())?
            .body_mut()
            .read_json()
            .map_err(|e| e.to_string())?;
        match (resp.answers, resp.answer) {
            (Some(parts), _) => Ok(parts.join(&self.config.answer_separator)),
            (None, Some(a)) => Ok(a),
            (None, None) => Err("response carries no answer".into()),
        }
    }
}

impl CueBackend for ExternalCueBackend {
    fn source(&self) -> CueSource {
        CueSource::External
    }

    fn answer(&self, prompt: &CuePrompt) -> Result<(String, CueSource), CueError> {
        let mut last = String::new();
        for _ in 0..=self.config.retries {
            match self.attempt(prompt) {
                Ok(text) => return Ok((text, CueSource::External)),
                Err(e) => last = e,
            }
        }
        Err(CueError::Transport {
            backend: CueSource::External,
            detail: last,
        })
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Content-addressed answer cache: one file per prompt key holding the answer text.
///
/// On a miss, a strict cache fails; otherwise it asks the inner backend (if
/// any) and stores the result, or returns an empty `none` cue.
pub struct CachedCueBackend {
    dir: PathBuf,
    strict: bool,
    inner: Option<Box<dyn CueBackend>>,
}

impl CachedCueBackend {
    pub fn new(dir: impl Into<PathBuf>, strict: bool) -> Self {
        Self {
            dir: dir.into(),
            strict,
            inner: None,
        }
    }

    pub fn with_inner(mut self, inner: Box<dyn CueBackend>) -> Self {
        self.inner = Some(inner);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    fn io_err(e: std::io::Error) -> CueError {
        CueError::Io {
            backend: CueSource::Cached,
            detail: e.to_string(),
        }
    }

    /// Store an answer; the file appears atomically via rename.
    pub fn store(&self, prompt: &CuePrompt, answer: &str) -> Result<(), CueError> {
        fs::create_dir_all(&self.dir).map_err(Self::io_err)?;
        let key = prompt.cache_key();
        let tmp = self.dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut f = fs::File::create(&tmp).map_err(Self::io_err)?;
            f.write_all(answer.as_bytes()).map_err(Self::io_err)?;
            f.sync_all().map_err(Self::io_err)?;
        }
        fs::rename(&tmp, self.path_for(&key)).map_err(Self::io_err)
    }

    /// Store the answer for a clip set under the standard questions.
    pub fn prime(&self, clips: &[ClipRef], answer: &str) -> Result<(), CueError> {
        self.store(&build_cue_prompt(clips)?, answer)
    }

    pub fn lookup(&self, prompt: &CuePrompt) -> Result<Option<String>, CueError> {
        match fs::read_to_string(self.path_for(&prompt.cache_key())) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Self::io_err(e)),
        }
    }
}

impl CueBackend for CachedCueBackend {
    fn source(&self) -> CueSource {
        CueSource::Cached
    }

    fn answer(&self, prompt: &CuePrompt) -> Result<(String, CueSource), CueError> {
        if let Some(text) = self.lookup(prompt)? {
            return Ok((text, CueSource::Cached));
        }
        if self.strict {
            return Err(CueError::CacheMiss {
                backend: CueSource::Cached,
                key: prompt.cache_key(),
            });
        }
        match &self.inner {
            Some(inner) => {
                let (text, source) = inner.answer(prompt)?;
                self.store(prompt, &text)?;
                Ok((text, source))
            }
            None => Ok((String::new(), CueSource::None)),
        }
    }
}

/// Cue-augmented user input for one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnContext {
    pub cue: EmotionCue,
    pub utterance: String,
    pub rendered: String,
}

/// Double every `[` so markers can never appear inside a segment.
pub fn escape_segment(text: &str) -> String {
    text.replace('[', "[[")
}

pub fn unescape_segment(text: &str) -> String {
    text.replace("[[", "[")
}

/// Join cue and utterance: `[CUE] <cue> [UTT] <utterance>`; an empty
/// segment is dropped together with its marker.
pub fn compose_turn_context(cue: EmotionCue, utterance: &str) -> Result<TurnContext, CueError> {
    compose_turn_context_masked(cue, utterance, true, true)
}

/// Composition with per-modality suppression. A suppressed segment is
/// treated as empty and is not retained in the returned context.
pub fn compose_turn_context_masked(
    mut cue: EmotionCue,
    utterance: &str,
    include_cue: bool,
    include_utterance: bool,
) -> Result<TurnContext, CueError> {
    if !include_cue {
        cue = EmotionCue::none(cue.turn_index);
    }
    let utterance = if include_utterance { utterance } else { "" };
    let mut parts = Vec::with_capacity(2);
    if !cue.text.is_empty() {
        parts.push(format!("{CUE_MARKER} {}", escape_segment(&cue.text)));
    }
    if !utterance.is_empty() {
        parts.push(format!("{UTT_MARKER} {}", escape_segment(utterance)));
    }
    if parts.is_empty() {
        return Err(CueError::EmptyContext);
    }
    Ok(TurnContext {
        cue,
        utterance: utterance.to_string(),
        rendered: parts.join(" "),
    })
}

/// Recover `(cue, utterance)` from a rendered context.
pub fn split_rendered(rendered: &str) -> Option<(String, String)> {
    // Positions of unescaped markers; every literal `[` inside a segment is doubled.
    let bytes = rendered.as_bytes();
    let mut marks: Vec<(usize, &str)> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            if bytes.get(i + 1) == Some(&b'[') {
                i += 2;
                continue;
            }
            let rest = &rendered[i..];
            let marker = [CUE_MARKER, UTT_MARKER].into_iter().find(|m| rest.starts_with(m))?;
            marks.push((i, marker));
            i += marker.len();
            continue;
        }
        i += 1;
    }
    if marks.first().map(|m| m.0) != Some(0) {
        return None;
    }
    let (mut cue, mut utt) = (String::new(), String::new());
    for (n, &(pos, marker)) in marks.iter().enumerate() {
        let start = pos + marker.len() + 1;
        let end = match marks.get(n + 1) {
            Some(&(next, _)) => next.checked_sub(1)?,
            None => rendered.len(),
        };
        let seg = unescape_segment(rendered.get(start..end)?);
        if marker == CUE_MARKER {
            cue = seg;
        } else {
            utt = seg;
        }
    }
    Some((cue, utt))
}

//! In-memory session store shared by the chat loop and the HTTP API.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use mesc_core::cues::CueBackend;
use mesc_core::model::{Generator, Vocab};
use mesc_core::reasoning::{
    AblationVariant, Conversation, CueFailurePolicy, DecodeConfig, HistoryEntry, PipelineOutput, SegmentSchema,
    SessionConfig, SessionError, TurnRequest,
};

/// A loaded generator with the tokenizer and schema it expects.
#[derive(Clone)]
pub struct Model {
    pub generator: Arc<dyn Generator>,
    pub vocab: Vocab,
    pub schema: SegmentSchema,
}

#[derive(Debug, thiserror::Error)]
pub enum ManagerError {
    #[error("no model loaded")]
    NoModel,
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("invalid session config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Turn(#[from] SessionError),
    #[error("transcript log: {0}")]
    Transcript(std::io::Error),
}

/// Body of `POST /sessions`; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub variant: Option<String>,
    pub decode: Option<DecodeConfig>,
    pub cue_policy: Option<CueFailurePolicy>,
}

pub struct Session {
    pub id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub config: SessionConfig,
    pub conversation: Conversation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub created_at: u64,
    pub n_turns: usize,
    pub variant: Option<AblationVariant>,
}

pub struct SessionManager {
    model: Option<Model>,
    cues: Arc<dyn CueBackend>,
    defaults: SessionConfig,
    transcript_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionManager {
    pub fn new(model: Option<Model>, cues: Arc<dyn CueBackend>) -> Self {
        let defaults = SessionConfig {
            schema: model.as_ref().map(|m| m.schema.clone()).unwrap_or_default(),
            ..SessionConfig::default()
        };
        Self {
            model,
            cues,
            defaults,
            transcript_dir: None,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_defaults(mut self, decode: DecodeConfig, cue_policy: CueFailurePolicy) -> Self {
        self.defaults.decode = decode;
        self.defaults.cue_policy = cue_policy;
        self
    }

    /// Append every successful turn to `<dir>/<session id>.jsonl`.
    pub fn with_transcripts(mut self, dir: impl Into<PathBuf>) -> Self {
        self.transcript_dir = Some(dir.into());
        self
    }

    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, req: CreateSession) -> Result<SessionInfo, ManagerError> {
        if self.model.is_none() {
            return Err(ManagerError::NoModel);
        }
        let mut config = self.defaults.clone();
        if let Some(v) = req.variant {
            let variant = v.parse::<AblationVariant>().map_err(|e| ManagerError::BadConfig(e.to_string()))?;
            config.variant = Some(variant);
        }
        if let Some(d) = req.decode {
            config.decode = d;
        }
        if let Some(p) = req.cue_policy {
            config.cue_policy = p;
        }
        let conversation = Conversation::new(&config).map_err(|e| ManagerError::BadConfig(e.to_string()))?;
        let id = uuid::Uuid::new_v4().to_string();
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let info = SessionInfo {
            id: id.clone(),
            created_at,
            n_turns: 0,
            variant: config.variant,
        };
        let session = Session {
            id: id.clone(),
            created_at,
            config,
            conversation,
        };
        self.sessions
            .write()
            .expect("session map")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(info)
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ManagerError> {
        self.sessions
            .read()
            .expect("session map")
            .get(id)
            .cloned()
            .ok_or_else(|| ManagerError::UnknownSession(id.to_string()))
    }

    /// Run one turn. Turns of one session are serialized; different
    /// sessions proceed in parallel.
    pub fn post_turn(&self, id: &str, req: &TurnRequest) -> Result<PipelineOutput, ManagerError> {
        let model = self.model.as_ref().ok_or(ManagerError::NoModel)?;
        let handle = self.get(id)?;
        let mut session = handle.lock().unwrap_or_else(|p| p.into_inner());
        let out = session
            .conversation
            .post_turn(req, model.generator.as_ref(), &model.vocab, self.cues.as_ref())?;
        if let Some(dir) = &self.transcript_dir {
            let record = json!({
                "session": session.id,
                "turn": session.conversation.n_turns(),
                "request": req,
                "output": out,
            });
            append_line(dir, &session.id, &record.to_string()).map_err(ManagerError::Transcript)?;
        }
        Ok(out)
    }

    pub fn history(&self, id: &str) -> Result<Vec<HistoryEntry>, ManagerError> {
        let handle = self.get(id)?;
        let session = handle.lock().unwrap_or_else(|p| p.into_inner());
        Ok(session.conversation.entries.clone())
    }

    pub fn info(&self, id: &str) -> Result<SessionInfo, ManagerError> {
        let handle = self.get(id)?;
        let s = handle.lock().unwrap_or_else(|p| p.into_inner());
        Ok(SessionInfo {
            id: s.id.clone(),
            created_at: s.created_at,
            n_turns: s.conversation.n_turns(),
            variant: s.config.variant,
        })
    }
}

fn append_line(dir: &std::path::Path, id: &str, line: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = OpenOptions::new().create(true).append(true).open(dir.join(format!("{id}.jsonl")))?;
    writeln!(f, "{line}")
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::vocab::{HIST_MARKER, RESP_MARKER, STRAT_MARKER, SYS_EMO_MARKER, USR_EMO_MARKER};

/// Role of a span in the linearized training sequence, in emission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Hist,
    UsrEmo,
    Strat,
    SysEmo,
    Resp,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Hist, Role::UsrEmo, Role::Strat, Role::SysEmo, Role::Resp];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Hist => "HIST",
            Role::UsrEmo => "USR_EMO",
            Role::Strat => "STRAT",
            Role::SysEmo => "SYS_EMO",
            Role::Resp => "RESP",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossPolicy {
    /// History is conditioning only.
    #[default]
    TargetsOnly,
    /// Every position of the sequence contributes.
    FullSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationVariant {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "-video")]
    NoVideo,
    #[serde(rename = "-text")]
    NoText,
    #[serde(rename = "-emotion")]
    NoEmotion,
    #[serde(rename = "-strategy")]
    NoStrategy,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Baseline,
        AblationVariant::NoVideo,
        AblationVariant::NoText,
        AblationVariant::NoEmotion,
        AblationVariant::NoStrategy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationVariant::Baseline => "baseline",
            AblationVariant::NoVideo => "-video",
            AblationVariant::NoText => "-text",
            AblationVariant::NoEmotion => "-emotion",
            AblationVariant::NoStrategy => "-strategy",
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("unknown ablation variant {0:?}")]
    UnknownVariant(String),
    #[error("the RESP span cannot be removed")]
    RespRequired,
    #[error("role markers must be pairwise distinct ({0:?} repeated)")]
    DuplicateMarker(String),
    #[error("invalid schema setting {key}={value}: {reason}")]
    BadSetting { key: String, value: String, reason: String },
}

impl FromStr for AblationVariant {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| SchemaError::UnknownVariant(s.to_string()))
    }
}

/// How turns are composed and linearized, and which positions carry loss.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSchema {
    /// Marker token per role, indexed in [`Role::ALL`] order.
    pub markers: [String; 5],
    /// Span inclusion per role, indexed in [`Role::ALL`] order.
    pub include: [bool; 5],
    /// Whether the audio-visual cue enters turn contexts.
    pub include_cue: bool,
    /// Whether the user utterance enters turn contexts.
    pub include_utterance: bool,
    pub loss_policy: LossPolicy,
    /// History token budget; oldest entries are dropped first.
    pub max_history_tokens: usize,
}

impl Default for SegmentSchema {
    fn default() -> Self {
        Self {
            markers: [HIST_MARKER, USR_EMO_MARKER, STRAT_MARKER, SYS_EMO_MARKER, RESP_MARKER].map(String::from),
            include: [true; 5],
            include_cue: true,
            include_utterance: true,
            loss_policy: LossPolicy::TargetsOnly,
            max_history_tokens: 128,
        }
    }
}

impl SegmentSchema {
    pub fn marker(&self, role: Role) -> &str {
        &self.markers[role.slot()]
    }

    pub fn includes(&self, role: Role) -> bool {
        self.include[role.slot()]
    }

    pub fn set_included(&mut self, role: Role, on: bool) -> Result<(), SchemaError> {
        if role == Role::Resp && !on {
            return Err(SchemaError::RespRequired);
        }
        self.include[role.slot()] = on;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if !self.includes(Role::Resp) {
            return Err(SchemaError::RespRequired);
        }
        for (i, m) in self.markers.iter().enumerate() {
            if self.markers[..i].contains(m) {
                return Err(SchemaError::DuplicateMarker(m.clone()));
            }
        }
        Ok(())
    }

    /// Apply one `KEY=VAL` override, as given on the command line.
    pub fn apply_setting(&mut self, setting: &str) -> Result<(), SchemaError> {
        let (key, value) = setting.split_once('=').ok_or_else(|| SchemaError::BadSetting {
            key: setting.into(),
            value: String::new(),
            reason: "expected KEY=VAL".into(),
        })?;
        let bad = |reason: &str| SchemaError::BadSetting {
            key: key.into(),
            value: value.into(),
            reason: reason.into(),
        };
        let flag = || value.parse::<bool>().map_err(|_| bad("expected true or false"));
        match key {
            "loss_policy" => {
                self.loss_policy = match value {
                    "targets_only" => LossPolicy::TargetsOnly,
                    "full_sequence" => LossPolicy::FullSequence,
                    _ => return Err(bad("expected targets_only or full_sequence")),
                }
            }
            "max_history_tokens" => {
                self.max_history_tokens = value.parse().map_err(|_| bad("expected a count"))?;
                if self.max_history_tokens < 2 {
                    return Err(bad("must be at least 2"));
                }
            }
            "include_cue" => self.include_cue = flag()?,
            "include_utterance" => self.include_utterance = flag()?,
            "include_usr_emo" => self.set_included(Role::UsrEmo, flag()?)?,
            "include_strat" => self.set_included(Role::Strat, flag()?)?,
            "include_sys_emo" => self.set_included(Role::SysEmo, flag()?)?,
            "include_resp" => self.set_included(Role::Resp, flag()?)?,
            _ => return Err(bad("unknown key")),
        }
        self.validate()
    }
}

/// Derive the schema for one ablation variant.
pub fn apply_ablation(schema: &SegmentSchema, variant: AblationVariant) -> Result<SegmentSchema, SchemaError> {
    schema.validate()?;
    let mut out = schema.clone();
    match variant {
        AblationVariant::Baseline => {}
        AblationVariant::NoVideo => out.include_cue = false,
        AblationVariant::NoText => out.include_utterance = false,
        AblationVariant::NoEmotion => out.set_included(Role::UsrEmo, false)?,
        AblationVariant::NoStrategy => out.set_included(Role::Strat, false)?,
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_parse() {
        assert_eq!("-emotion".parse::<AblationVariant>().unwrap(), AblationVariant::NoEmotion);
        assert_eq!(
            "-speed".parse::<AblationVariant>(),
            Err(SchemaError::UnknownVariant("-speed".into()))
        );
    }

    #[test]
    fn ablations_touch_one_switch() {
        let base = SegmentSchema::default();
        let s = apply_ablation(&base, AblationVariant::NoEmotion).unwrap();
        assert!(!s.includes(Role::UsrEmo));
        assert!(s.includes(Role::Strat));
        let s = apply_ablation(&base, AblationVariant::NoVideo).unwrap();
        assert!(!s.include_cue && s.include_utterance);
        let s = apply_ablation(&base, AblationVariant::NoText).unwrap();
        assert!(s.include_cue && !s.include_utterance);
        assert_eq!(apply_ablation(&base, AblationVariant::Baseline).unwrap(), base);
    }

    #[test]
    fn resp_cannot_be_removed() {
        let mut s = SegmentSchema::default();
        assert_eq!(s.set_included(Role::Resp, false), Err(SchemaError::RespRequired));
        assert_eq!(s.apply_setting("include_resp=false"), Err(SchemaError::RespRequired));
    }

    #[test]
    fn duplicate_markers_rejected() {
        let mut s = SegmentSchema::default();
        s.markers[2] = s.markers[1].clone();
        assert!(matches!(s.validate(), Err(SchemaError::DuplicateMarker(_))));
    }

    #[test]
    fn settings() {
        let mut s = SegmentSchema::default();
        s.apply_setting("loss_policy=full_sequence").unwrap();
        assert_eq!(s.loss_policy, LossPolicy::FullSequence);
        s.apply_setting("include_strat=false").unwrap();
        assert!(!s.includes(Role::Strat));
        assert!(s.apply_setting("colour=blue").is_err());
        assert!(s.apply_setting("nonsense").is_err());
    }
}

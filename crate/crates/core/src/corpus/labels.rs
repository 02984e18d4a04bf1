//! Closed label vocabularies.
//!
//! Variant order is the canonical order used for histograms, confusion
//! matrices and tie-breaking during constrained decoding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A closed vocabulary of labels with a canonical order.
pub trait Label: Copy + Eq + Ord + fmt::Debug + fmt::Display + 'static {
    const ALL: &'static [Self];

    fn as_str(self) -> &'static str;

    fn index(self) -> usize {
        Self::ALL
            .iter()
            .position(|l| *l == self)
            .expect("label in ALL")
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.as_str() == s)
    }
}

macro_rules! closed_label {
    ($(#[$meta:meta])* $name:ident, $kind:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl Label for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];

            fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownLabel;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                <$name as Label>::parse(s).ok_or_else(|| UnknownLabel {
                    kind: $kind,
                    value: s.to_string(),
                })
            }
        }
    };
}

/// Returned when a string is not part of a closed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} label: {value:?}")]
pub struct UnknownLabel {
    pub kind: &'static str,
    pub value: String,
}

closed_label!(
    /// Utterance emotion.
    EmotionLabel, "emotion", {
        Anger => "anger",
        Sadness => "sadness",
        Disgust => "disgust",
        Depression => "depression",
        Neutral => "neutral",
        Joy => "joy",
        Fear => "fear",
    }
);

closed_label!(
    /// Therapist strategy.
    StrategyLabel, "strategy", {
        OpenQuestions => "open_questions",
        Approval => "approval",
        SelfDisclosure => "self_disclosure",
        Restatement => "restatement",
        Interpretation => "interpretation",
        Advisement => "advisement",
        CommunicationSkills => "communication_skills",
        StructuringTheTherapy => "structuring_the_therapy",
        GuidingThePace => "guiding_the_pace",
        Others => "others",
    }
);

closed_label!(
    Speaker, "speaker", {
        Client => "client",
        Therapist => "therapist",
    }
);

closed_label!(
    MediaKind, "media kind", {
        Video => "video",
        Audio => "audio",
    }
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_sizes() {
        assert_eq!(EmotionLabel::ALL.len(), 7);
        assert_eq!(StrategyLabel::ALL.len(), 10);
        assert_eq!(Speaker::ALL.len(), 2);
    }

    #[test]
    fn parse_rejects_outside_vocabulary() {
        assert_eq!("joy".parse::<EmotionLabel>().unwrap(), EmotionLabel::Joy);
        let err = "surprise".parse::<EmotionLabel>().unwrap_err();
        assert_eq!(err.kind, "emotion");
        assert!("Approval".parse::<StrategyLabel>().is_err());
        assert_eq!(
            "guiding_the_pace".parse::<StrategyLabel>().unwrap(),
            StrategyLabel::GuidingThePace
        );
    }

    #[test]
    fn canonical_order_and_serde_agree() {
        for (i, l) in StrategyLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            let json = serde_json::to_string(l).unwrap();
            assert_eq!(json, format!("\"{}\"", l.as_str()));
        }
        assert_eq!(EmotionLabel::ALL[4], EmotionLabel::Neutral);
    }
}

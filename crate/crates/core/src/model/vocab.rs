//! Word-level vocabulary with atomic special tokens.
//!
//! Ids `0..N_SPECIALS` are reserved: padding, unknown, begin/end, the five
//! role markers and one token per label (user emotion, strategy, system
//! emotion). Text is split on whitespace and only ever maps to word ids or
//! `<unk>`, so specials never arise from tokenization.

use std::collections::{BTreeMap, HashMap};

use sha2::{Digest, Sha256};

use crate::corpus::{EmotionLabel, Label, StrategyLabel};

pub type TokenId = u32;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BEGIN: &str = "<s>";
pub const END: &str = "</s>";

pub const HIST_MARKER: &str = "<hist>";
pub const USR_EMO_MARKER: &str = "<usr_emo>";
pub const STRAT_MARKER: &str = "<strat>";
pub const SYS_EMO_MARKER: &str = "<sys_emo>";
pub const RESP_MARKER: &str = "<resp>";

pub fn user_emotion_token(l: EmotionLabel) -> String {
    format!("<usr:{}>", l.as_str())
}

pub fn strategy_token(l: StrategyLabel) -> String {
    format!("<strat:{}>", l.as_str())
}

pub fn system_emotion_token(l: EmotionLabel) -> String {
    format!("<sys:{}>", l.as_str())
}

fn special_tokens() -> Vec<String> {
    let mut out: Vec<String> = [
        PAD,
        UNK,
        BEGIN,
        END,
        HIST_MARKER,
        USR_EMO_MARKER,
        STRAT_MARKER,
        SYS_EMO_MARKER,
        RESP_MARKER,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    out.extend(EmotionLabel::ALL.iter().map(|&l| user_emotion_token(l)));
    out.extend(StrategyLabel::ALL.iter().map(|&l| strategy_token(l)));
    out.extend(EmotionLabel::ALL.iter().map(|&l| system_emotion_token(l)));
    out
}

/// 4 control tokens + 5 role markers + 7 + 10 + 7 labels.
pub const N_SPECIALS: usize = 33;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("vocabulary does not start with the expected special tokens")]
    BadSpecials,
    #[error("duplicate token {0:?}")]
    Duplicate(String),
    #[error("word token {0:?} contains whitespace or is empty")]
    BadWord(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    specials: HashMap<String, TokenId>,
    words: HashMap<String, TokenId>,
}

impl Vocab {
    /// Build from a text corpus: words sorted by descending frequency, ties
    /// alphabetically; words seen fewer than `min_count` times become `<unk>`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let specials = special_tokens();
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for t in texts {
            for w in t.split_whitespace() {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|(w, c)| *c >= min_count.max(1) && !specials.iter().any(|s| s == w))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens = specials;
        tokens.extend(words.into_iter().map(|(w, _)| w.to_string()));
        Self::from_tokens(tokens).expect("constructed vocabulary is valid")
    }

    /// Rebuild from an id-ordered token list, e.g. from a checkpoint.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        let expected = special_tokens();
        if tokens.len() < expected.len() || tokens[..expected.len()] != expected[..] {
            return Err(VocabError::BadSpecials);
        }
        let mut specials = HashMap::new();
        let mut words = HashMap::new();
        for (id, tok) in tokens.iter().enumerate() {
            let id = id as TokenId;
            if (id as usize) < N_SPECIALS {
                specials.insert(tok.clone(), id);
                continue;
            }
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(VocabError::BadWord(tok.clone()));
            }
            if specials.contains_key(tok) || words.insert(tok.clone(), id).is_some() {
                return Err(VocabError::Duplicate(tok.clone()));
            }
        }
        Ok(Self {
            tokens,
            specials,
            words,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn special(&self, name: &str) -> Option<TokenId> {
        self.specials.get(name).copied()
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) < N_SPECIALS
    }

    pub fn is_word(&self, id: TokenId) -> bool {
        (id as usize) >= N_SPECIALS && (id as usize) < self.tokens.len()
    }

    pub fn word_ids(&self) -> std::ops::Range<TokenId> {
        N_SPECIALS as TokenId..self.tokens.len() as TokenId
    }

    pub fn pad(&self) -> TokenId {
        0
    }

    pub fn unk(&self) -> TokenId {
        1
    }

    pub fn begin(&self) -> TokenId {
        2
    }

    pub fn end(&self) -> TokenId {
        3
    }

    pub fn user_emotion(&self, l: EmotionLabel) -> TokenId {
        9 + l.index() as TokenId
    }

    pub fn strategy(&self, l: StrategyLabel) -> TokenId {
        16 + l.index() as TokenId
    }

    pub fn system_emotion(&self, l: EmotionLabel) -> TokenId {
        26 + l.index() as TokenId
    }

    pub fn word(&self, w: &str) -> TokenId {
        self.words.get(w).copied().unwrap_or(self.unk())
    }

    pub fn encode_text(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace().map(|w| self.word(w)).collect()
    }

    /// Join word tokens with single spaces; specials are skipped.
    pub fn decode_words(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| self.is_word(id))
            .map(|&id| self.tokens[id as usize].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// SHA-256 over the newline-joined token list.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

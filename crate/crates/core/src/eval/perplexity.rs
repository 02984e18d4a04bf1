use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::generator::Generator;
use crate::model::ops::log_softmax_at;
use crate::model::vocab::{TokenId, Vocab};
use crate::reasoning::history::DialogueExample;
use crate::reasoning::linearize::{encode_history, marker_id, LinearizeError};
use crate::reasoning::schema::{LossPolicy, Role, SegmentSchema};

/// One gold response to score under teacher forcing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerplexityItem {
    pub source: Vec<TokenId>,
    /// Decoder tokens before the first response token.
    pub prefix: Vec<TokenId>,
    /// Gold response tokens, end marker included.
    pub response: Vec<TokenId>,
}

/// Decoder context for the response stage with gold labels filled in.
pub fn perplexity_item(ex: &DialogueExample, schema: &SegmentSchema, vocab: &Vocab) -> Result<PerplexityItem, LinearizeError> {
    let hist = encode_history(&ex.history, schema, vocab)?;
    let mut prefix = vec![vocab.begin()];
    if schema.loss_policy == LossPolicy::FullSequence {
        prefix.extend_from_slice(&hist);
    }
    let g = &ex.gold;
    for (role, label) in [
        (Role::UsrEmo, vocab.user_emotion(g.user_emotion)),
        (Role::Strat, vocab.strategy(g.strategy)),
        (Role::SysEmo, vocab.system_emotion(g.system_emotion)),
    ] {
        if schema.includes(role) {
            prefix.push(marker_id(vocab, schema, role)?);
            prefix.push(label);
        }
    }
    prefix.push(marker_id(vocab, schema, Role::Resp)?);
    let mut response = vocab.encode_text(&g.response);
    response.push(vocab.end());
    Ok(PerplexityItem {
        source: if hist.is_empty() { vec![vocab.begin()] } else { hist },
        prefix,
        response,
    })
}

/// `exp` of the mean per-token NLL over every response token.
pub fn perplexity(generator: &dyn Generator, items: &[PerplexityItem]) -> Result<f64, EvalError> {
    if items.is_empty() {
        return Err(EvalError::Empty("perplexity items"));
    }
    let v = generator.vocab_size();
    let mut nll = 0.0;
    let mut count = 0usize;
    for item in items {
        if item.response.is_empty() {
            continue;
        }
        if item.prefix.is_empty() {
            return Err(EvalError::Empty("decoder prefix"));
        }
        let mut input = item.prefix.clone();
        input.extend_from_slice(&item.response[..item.response.len() - 1]);
        let rows = generator.teacher_forced_logits(&item.source, &input)?;
        let first = item.prefix.len() - 1;
        for (j, &t) in item.response.iter().enumerate() {
            let row = &rows[first + j];
            if row.len() != v || t as usize >= v {
                return Err(EvalError::UnknownLabel(format!("token {t} outside vocabulary of {v}")));
            }
            nll -= log_softmax_at(row, t as usize);
            count += 1;
        }
    }
    if count == 0 {
        return Err(EvalError::Empty("response tokens"));
    }
    Ok((nll / count as f64).exp().max(1.0))
}

use super::ops::log_softmax_at;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LossError {
    #[error("loss mask selects no positions")]
    EmptyMask,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("target {target} outside vocabulary of {vocab}")]
    TargetOutOfRange { target: usize, vocab: usize },
}

/// Negative log-likelihood over the masked positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllLoss<T> {
    /// Per-masked-token mean; the optimized quantity.
    pub mean: T,
    /// Unnormalized sum of `-log p(target)`.
    pub sum: T,
    pub count: usize,
}

/// `logits` holds one row of `vocab` scores per step.
pub fn nll_loss<T: Scalar>(
    logits: &[T],
    vocab: usize,
    targets: &[usize],
    mask: &[bool],
) -> Result<NllLoss<T>, LossError> {
    if vocab == 0 || logits.len() != targets.len() * vocab {
        return Err(LossError::Shape(format!(
            "{} logits for {} steps of vocabulary {}",
            logits.len(),
            targets.len(),
            vocab
        )));
    }
    if mask.len() != targets.len() {
        return Err(LossError::Shape(format!("{} mask entries for {} targets", mask.len(), targets.len())));
    }
    let mut sum = T::zero();
    let mut count = 0;
    for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        if t >= vocab {
            return Err(LossError::TargetOutOfRange { target: t, vocab });
        }
        sum -= log_softmax_at(&logits[i * vocab..(i + 1) * vocab], t);
        count += 1;
    }
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    // -log p is non-negative analytically; clamp rounding below zero.
    let sum = sum.max(T::zero());
    Ok(NllLoss {
        mean: sum * lit(1.0 / count as f64),
        sum,
        count,
    })
}

use super::transformer::{ForwardError, Transformer};
use super::vocab::TokenId;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("{backend} generator failed: {detail}")]
    Backend { backend: String, detail: String },
    #[error("generator returned {got} logits, expected {expected}")]
    Shape { expected: usize, got: usize },
}

/// Anything that scores the next token given a source and decoder prefix.
pub trait Generator: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Unnormalized scores for the token after `prefix`.
    fn next_logits(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, GeneratorError>;

    /// Row `i` scores the token after `input[..=i]`.
    fn teacher_forced_logits(&self, source: &[TokenId], input: &[TokenId]) -> Result<Vec<Vec<f64>>, GeneratorError> {
        (1..=input.len()).map(|i| self.next_logits(source, &input[..i])).collect()
    }
}

/// Keep the leading marker and the most recent tokens when a source
/// outgrows the encoder positions.
pub(crate) fn fit_source(source: &[TokenId], max: usize) -> Vec<TokenId> {
    if source.len() <= max || max == 0 {
        return source.to_vec();
    }
    let mut out = Vec::with_capacity(max);
    out.push(source[0]);
    out.extend_from_slice(&source[source.len() - (max - 1)..]);
    out
}

impl<T: Scalar> Generator for Transformer<T> {
    fn vocab_size(&self) -> usize {
        Transformer::vocab_size(self)
    }

    /// Sources and prefixes longer than the positional tables keep their
    /// first token and the most recent tail.
    fn next_logits(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, GeneratorError> {
        let src = fit_source(source, self.config().context_len);
        let dec = fit_source(prefix, self.config().decoder_len());
        let logits = Transformer::next_logits(self, &src, &dec)?;
        Ok(logits.into_iter().map(T::to_f64_lossy).collect())
    }

    fn teacher_forced_logits(&self, source: &[TokenId], input: &[TokenId]) -> Result<Vec<Vec<f64>>, GeneratorError> {
        let src = fit_source(source, self.config().context_len);
        let max = self.config().decoder_len();
        let head = &input[..input.len().min(max)];
        let cache = self.forward(&src, head, None)?;
        let v = Transformer::vocab_size(self);
        let mut rows: Vec<Vec<f64>> = cache
            .logits
            .chunks(v)
            .map(|row| row.iter().map(|&x| x.to_f64_lossy()).collect())
            .collect();
        for end in max + 1..=input.len() {
            rows.push(Generator::next_logits(self, source, &input[..end])?);
        }
        Ok(rows)
    }
}

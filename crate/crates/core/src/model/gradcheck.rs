//! Finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ModelConfig};
use super::transformer::{ForwardError, Transformer};
use super::vocab::TokenId;

pub const FD_STEP: f64 = 1e-5;
const PERTURB_STD: f64 = 0.5;
/// Largest model the check is meant for.
pub const MAX_PARAMS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub n_params: usize,
    pub max_relative_error: f64,
    /// `(coordinate, analytic, numeric, relative error)`.
    pub samples: Vec<(usize, f64, f64, f64)>,
}

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("model has {0} parameters, above the {MAX_PARAMS} limit")]
    TooLarge(usize),
}

/// Below this magnitude a central difference at `FD_STEP` is dominated by
/// f64 rounding in the loss, so errors are measured against this floor.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRAD_FLOOR)
}

/// Compare analytic and central-difference gradients of the mean NLL on a
/// random sequence pair, at `n_samples` random coordinates, in f64.
pub fn gradient_check(
    config: &ModelConfig,
    vocab_size: usize,
    n_samples: usize,
    seed: u64,
) -> Result<GradCheckReport, GradCheckError> {
    config.validate()?;
    let mut model = Transformer::<f64>::new(config.clone(), vocab_size);
    if model.n_params() > MAX_PARAMS {
        return Err(GradCheckError::TooLarge(model.n_params()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Move away from the small-scale init so no coordinate's gradient sits
    // at the finite-difference noise floor.
    let jitter = Normal::new(0.0, PERTURB_STD).expect("valid std");
    for t in &mut model.params.tensors {
        t.data.iter_mut().for_each(|v| *v += jitter.sample(&mut rng));
    }
    let src_len = config.context_len.min(7);
    let dec_len = config.decoder_len().min(6);
    let mut draw = |n: usize| -> Vec<TokenId> { (0..n).map(|_| rng.random_range(0..vocab_size as TokenId)).collect() };
    let src = draw(src_len);
    let dec_in = draw(dec_len);
    let targets = draw(dec_len);
    let mask: Vec<bool> = (0..dec_len).map(|i| i != 1).collect();

    let mut grads = model.params.zeros_like();
    model.loss_and_grad(&src, &dec_in, &targets, &mask, None, &mut grads)?;

    let n = model.n_params();
    let mut probe = model.clone();
    let mut samples = Vec::with_capacity(n_samples);
    let mut max_err: f64 = 0.0;
    for _ in 0..n_samples {
        // Key biases shift every score of a query row equally, so softmax
        // cancels them and their gradient is identically zero; a relative
        // error there would only measure finite-difference noise.
        let c = loop {
            let c = rng.random_range(0..n);
            let (t, _) = model.params.locate(c);
            if !model.params.tensors[t].name.ends_with(".bk") {
                break c;
            }
        };
        let x = probe.params.get_flat(c);
        let mut scratch = probe.params.zeros_like();
        probe.params.set_flat(c, x + FD_STEP);
        let lp = probe.loss_and_grad(&src, &dec_in, &targets, &mask, None, &mut scratch)?;
        probe.params.set_flat(c, x - FD_STEP);
        let lm = probe.loss_and_grad(&src, &dec_in, &targets, &mask, None, &mut scratch)?;
        probe.params.set_flat(c, x);
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let analytic = grads.get_flat(c);
        let err = relative_error(analytic, numeric);
        max_err = max_err.max(err);
        samples.push((c, analytic, numeric, err));
    }
    Ok(GradCheckReport {
        n_params: n,
        max_relative_error: max_err,
        samples,
    })
}

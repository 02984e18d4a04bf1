use serde::{Deserialize, Serialize};

use super::transformer::ParamStore;
use crate::scalar::{lit, Scalar};

/// Adam settings plus the gradient clipping threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm cap; non-positive disables clipping.
    pub grad_clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    m: ParamStore<T>,
    v: ParamStore<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Clip `grads` in place and apply one update. Returns the pre-clip norm.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &mut ParamStore<T>) -> T {
        let norm = grads.sq_norm().sqrt();
        let clip: T = lit(self.config.grad_clip);
        if clip > T::zero() && norm > clip {
            grads.scale(clip / norm);
        }
        self.step += 1;
        let b1: T = lit(self.config.beta1);
        let b2: T = lit(self.config.beta2);
        let one = T::one();
        let c1 = one - b1.powi(self.step);
        let c2 = one - b2.powi(self.step);
        let lr: T = lit(self.config.lr);
        let eps: T = lit(self.config.eps);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mhat = m.data[i] / c1;
                let vhat = v.data[i] / c2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        norm
    }
}

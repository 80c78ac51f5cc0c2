use serde::{Deserialize, Serialize};

use crate::diffgraph::{ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(&t.shape))
                .collect()
        };
        AdamState {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient entry was NaN or infinite; nothing was updated.
    SkippedNonFinite,
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &[Vec<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<StepOutcome> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (p, g) in params.tensors().iter().zip(grads) {
        if p.numel() != g.len() {
            return Err(Error::shape(
                "adam_step",
                format!("gradient for {:?} has {} entries", p.shape, g.len()),
            ));
        }
    }
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Ok(StepOutcome::SkippedNonFinite);
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    let step = T::of(cfg.lr * c2.sqrt() / c1);
    let eps = T::of(cfg.eps * c2.sqrt());
    for (((p, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((pi, &gi), mi), vi) in p.data.iter_mut().zip(g).zip(&mut m.data).zip(&mut v.data) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            *pi -= step * *mi / (vi.sqrt() + eps);
        }
    }
    Ok(StepOutcome::Applied)
}

//! Diagonal Gaussians on the graph: reparameterized sampling and the KL
//! divergence to a standard normal.

use rand_distr::{Distribution, StandardNormal};

use crate::diffgraph::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub struct GaussianParams {
    pub mean: Var,
    /// Already clamped to `[LOGVAR_MIN, LOGVAR_MAX]`.
    pub logvar: Var,
}

impl GaussianParams {
    /// Wraps raw network outputs, clamping the log-variance.
    pub fn new<T: Scalar>(g: &mut Graph<T>, mean: Var, raw_logvar: Var) -> Result<Self> {
        if g.shape(mean) != g.shape(raw_logvar) {
            return Err(Error::shape(
                "GaussianParams",
                format!(
                    "mean {:?} vs log-variance {:?}",
                    g.shape(mean),
                    g.shape(raw_logvar)
                ),
            ));
        }
        let logvar = g.clamp(raw_logvar, LOGVAR_MIN, LOGVAR_MAX);
        Ok(GaussianParams { mean, logvar })
    }
}

/// Standard-normal noise of `shape`, drawn from `seed`.
pub fn standard_normal<T: Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut r = rng::rng(seed);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::of(StandardNormal.sample(&mut r)))
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// `z = mean + exp(logvar / 2) ⊙ η` with `η ~ N(0, I)` seeded by `seed`.
pub fn reparameterize<T: Scalar>(g: &mut Graph<T>, q: &GaussianParams, seed: u64) -> Result<Var> {
    let eta = standard_normal(g.shape(q.mean), seed);
    reparameterize_with(g, q, eta)
}

/// Reparameterized sample with caller-provided noise.
pub fn reparameterize_with<T: Scalar>(
    g: &mut Graph<T>,
    q: &GaussianParams,
    eta: Tensor<T>,
) -> Result<Var> {
    let eta = g.input(eta);
    let half = g.scale(q.logvar, 0.5);
    let std = g.exp(half);
    let noise = g.mul(std, eta)?;
    g.add(q.mean, noise)
}

/// `Σ ½ (exp(lv) + μ² − 1 − lv)`, the KL divergence to `N(0, I)`.
pub fn kl_std_normal<T: Scalar>(g: &mut Graph<T>, q: &GaussianParams) -> Result<Var> {
    let var = g.exp(q.logvar);
    let mu2 = g.mul(q.mean, q.mean)?;
    let a = g.add(var, mu2)?;
    let b = g.sub(a, q.logvar)?;
    let c = g.add_scalar(b, -1.0);
    let s = g.sum(c);
    Ok(g.scale(s, 0.5))
}

/// Closed-form KL on plain slices.
pub fn kl_std_normal_values(mean: &[f64], logvar: &[f64]) -> f64 {
    mean.iter()
        .zip(logvar)
        .map(|(&m, &lv)| {
            let lv = lv.clamp(LOGVAR_MIN, LOGVAR_MAX);
            0.5 * (lv.exp() + m * m - 1.0 - lv)
        })
        .sum()
}

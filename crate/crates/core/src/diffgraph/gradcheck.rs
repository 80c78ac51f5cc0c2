//! Central finite-difference gradient checks.

use crate::diffgraph::{Graph, Tensor, Var};
use crate::error::Result;

/// Builds a scalar loss from differentiable leaves bound to the given inputs.
pub type LossFn<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + 'a;

/// Per-input relative error `‖g_ad − g_fd‖ / max(‖g_ad‖, ‖g_fd‖, 1e-12)`.
pub fn check(f: &LossFn<'_>, inputs: &[Tensor<f64>], step: f64) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };

    let mut errors = Vec::with_capacity(inputs.len());
    let mut probe = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let ad = grads.get_or_zero(*v, inputs[k].numel());
        let mut fd = vec![0.0; ad.len()];
        for i in 0..ad.len() {
            let x0 = probe[k].data[i];
            probe[k].data[i] = x0 + step;
            let up = eval(&probe)?;
            probe[k].data[i] = x0 - step;
            let down = eval(&probe)?;
            probe[k].data[i] = x0;
            fd[i] = (up - down) / (2.0 * step);
        }
        let diff = ad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = ad.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nf = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        errors.push(diff / na.max(nf).max(1e-12));
    }
    Ok(errors)
}

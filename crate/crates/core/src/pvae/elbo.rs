use std::sync::Arc;

use crate::diffgraph::{
    kl_std_normal, reparameterize, standard_normal, Graph, LinearMap, Scalar, Var,
};
use crate::error::{Error, Result};
use crate::pvae::{Bound, TrainingExample};
use crate::rng;

const OBJECT_NOISE: u64 = u64::MAX;

/// Loss node and its two components.
#[derive(Debug, Clone, Copy)]
pub struct ElboTerms {
    /// `kl − loglik`, the negative lower bound.
    pub loss: Var,
    /// Poisson log-likelihood averaged over the object samples.
    pub loglik: Var,
    /// KL divergence of every latent level to the standard normal.
    pub kl: Var,
}

/// Builds the negative evidence lower bound of one measurement with
/// `samples` reparameterized draws of `z` and of the object. All noise comes
/// from `seed`, so a fixed seed gives a deterministic graph.
pub fn elbo_loss<T: Scalar>(
    g: &mut Graph<T>,
    net: &Bound<'_, T>,
    ex: &TrainingExample,
    samples: usize,
    seed: u64,
) -> Result<ElboTerms> {
    if samples == 0 {
        return Err(Error::Config("ELBO needs at least one sample".into()));
    }
    let n = net.model.arch.image_size;
    if ex.image_size() != n || ex.matrix.side() != n {
        return Err(Error::shape(
            "elbo_loss",
            format!(
                "measurement of a {0}x{0} object, model is {1}x{1}",
                ex.image_size(),
                n
            ),
        ));
    }
    let q = net.encode(g, &ex.input)?;
    let mut kl_terms = Vec::with_capacity(q.len());
    for level in &q {
        kl_terms.push(kl_std_normal(g, level)?);
    }
    let kl = sum_all(g, &kl_terms)?;

    let counts: Vec<T> = ex.counts.iter().map(|&k| T::of(k)).collect();
    let map: Arc<dyn LinearMap<T>> = ex.matrix.clone();
    let mut lls = Vec::with_capacity(samples);
    for s in 0..samples as u64 {
        let z = q
            .iter()
            .enumerate()
            .map(|(l, level)| reparameterize(g, level, rng::derive(seed, &[s, l as u64])))
            .collect::<Result<Vec<Var>>>()?;
        let obj = net.decode(g, &z)?;
        let eta = g.input(standard_normal(
            &[n, n],
            rng::derive(seed, &[s, OBJECT_NOISE]),
        ));
        let half = g.scale(obj.logvar, 0.5);
        let sd = g.exp(half);
        let noise = g.mul(sd, eta)?;
        let sample = g.add(obj.mean, noise)?;
        let proj = g.linear(sample, map.clone())?;
        let scaled = g.scale(proj, ex.scale.gain());
        let rates = g.add_scalar(scaled, ex.scale.epsilon);
        lls.push(g.poisson_loglik(rates, &counts, ex.scale.epsilon)?);
    }
    let total = sum_all(g, &lls)?;
    let loglik = g.scale(total, 1.0 / samples as f64);
    let loss = g.sub(kl, loglik)?;

    let ll = g.value(loglik).item();
    if !ll.is_finite() {
        return Err(Error::Numerical(format!("likelihood term is {ll:?}")));
    }
    let k = g.value(kl).item();
    if !k.is_finite() {
        return Err(Error::Numerical(format!("KL term is {k:?}")));
    }
    Ok(ElboTerms { loss, loglik, kl })
}

fn sum_all<T: Scalar>(g: &mut Graph<T>, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

use rayon::prelude::*;

use crate::diffgraph::{standard_normal, Graph, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::pvae::{EncoderInput, PvaeModel};
use crate::rng;

/// Mean and (clamped) log-variance of one latent level.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentValues {
    pub shape: Vec<usize>,
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
}

pub fn encode_values<T: Scalar>(
    model: &PvaeModel<T>,
    input: &EncoderInput,
) -> Result<Vec<LatentValues>> {
    let mut g = Graph::new();
    let net = model.bind_frozen(&mut g);
    let q = net.encode(&mut g, input)?;
    Ok(q.iter()
        .map(|p| LatentValues {
            shape: g.shape(p.mean).to_vec(),
            mean: g.value(p.mean).to_f64(),
            logvar: g.value(p.logvar).to_f64(),
        })
        .collect())
}

/// Decoder mean and log-variance images for the given latent values.
pub fn decode_values<T: Scalar>(
    model: &PvaeModel<T>,
    z: &[Tensor<f64>],
) -> Result<(ImageGrid, ImageGrid)> {
    let mut g = Graph::new();
    let net = model.bind_frozen(&mut g);
    let z: Vec<_> = z.iter().map(|t| g.input(t.cast())).collect();
    let obj = net.decode(&mut g, &z)?;
    let n = model.arch.image_size;
    Ok((
        ImageGrid::from_values(n, n, g.value(obj.mean).to_f64())?,
        ImageGrid::from_values(n, n, g.value(obj.logvar).to_f64())?,
    ))
}

fn draw<T: Scalar>(model: &PvaeModel<T>, q: &[LatentValues], seed: u64) -> Result<ImageGrid> {
    let z: Vec<Tensor<f64>> = q
        .iter()
        .enumerate()
        .map(|(l, level)| {
            let eta = standard_normal::<f64>(&level.shape, rng::derive(seed, &[l as u64]));
            let data = level
                .mean
                .iter()
                .zip(&level.logvar)
                .zip(&eta.data)
                .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
                .collect();
            Tensor::new(level.shape.clone(), data)
        })
        .collect();
    let (mean, logvar) = decode_values(model, &z)?;
    let n = model.arch.image_size;
    let eta = standard_normal::<f64>(&[n * n], rng::derive(seed, &[u64::MAX]));
    let values = mean
        .values()
        .iter()
        .zip(logvar.values())
        .zip(&eta.data)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect();
    ImageGrid::from_values(n, n, values)
}

/// `count` independent draws from the model posterior: `z` from the encoder's
/// Gaussians, then the object from the decoder's.
pub fn sample_posterior<T: Scalar>(
    model: &PvaeModel<T>,
    input: &EncoderInput,
    count: usize,
    seed: u64,
) -> Result<Vec<ImageGrid>> {
    let q = encode_values(model, input)?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| draw(model, &q, rng::derive(seed, &[i])))
        .collect()
}

/// Pixelwise mean of `count` posterior samples.
pub fn reconstruct_point<T: Scalar>(
    model: &PvaeModel<T>,
    input: &EncoderInput,
    count: usize,
    seed: u64,
) -> Result<ImageGrid> {
    if count == 0 {
        return Err(Error::Config(
            "point estimate needs at least one sample".into(),
        ));
    }
    let samples = sample_posterior(model, input, count, seed)?;
    let n = model.arch.image_size;
    let mut acc = vec![0.0; n * n];
    for s in &samples {
        for (a, v) in acc.iter_mut().zip(s.values()) {
            *a += v;
        }
    }
    ImageGrid::from_values(n, n, acc.into_iter().map(|a| a / count as f64).collect())
}

//! Physics-informed variational autoencoder.
//!
//! The encoder maps a sparse measurement to Gaussian latents at every skip
//! level, the decoder maps latent samples to a per-pixel Gaussian over the
//! object, and training maximizes the evidence lower bound whose likelihood
//! is the Poisson model of the projector. Training sees measurements only.

mod arch;
mod elbo;
mod sample;
mod train;

use std::sync::Arc;

pub use arch::{ArchSpec, Architecture, Bound, ObjectDistribution, PvaeModel};
pub use elbo::{elbo_loss, ElboTerms};
pub use sample::{decode_values, encode_values, reconstruct_point, sample_posterior, LatentValues};
pub use train::{Checkpoint, EpochLog, TrainConfig, TrainManifest, TrainState, Trainer};

use crate::classical::{fbp_reconstruct, Filter, ReconConfig};
use crate::error::{Error, Result};
use crate::projector::{
    radon_adjoint, AngleSchedule, CountScale, RayCache, Sinogram, SystemMatrix,
};

/// Two-channel encoder input: a filtered backprojection of the measurement
/// and the angle-coverage map of its schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub size: usize,
    pub recon: Vec<f64>,
    /// Backprojection of an all-ones sinogram, scaled to a maximum of 1.
    pub coverage: Vec<f64>,
}

impl EncoderInput {
    pub fn from_measurement(sino: &Sinogram) -> Result<Self> {
        let recon = fbp_reconstruct(sino, &ReconConfig::fbp(Filter::Ramp))?.into_values();
        let coverage = coverage_map(sino.bins, &sino.schedule)?;
        let input = EncoderInput {
            size: sino.bins,
            recon,
            coverage,
        };
        if !input
            .recon
            .iter()
            .chain(&input.coverage)
            .all(|v| v.is_finite())
        {
            return Err(Error::Numerical("encoder input is not finite".into()));
        }
        Ok(input)
    }
}

pub fn coverage_map(n: usize, schedule: &AngleSchedule) -> Result<Vec<f64>> {
    let ones = Sinogram::new(schedule.clone(), n, vec![1.0; n * schedule.len()])?;
    let bp = radon_adjoint(&ones);
    let top = bp.max();
    if !(top > 0.0) {
        return Err(Error::Data("angle schedule covers no pixel".into()));
    }
    Ok(bp.values().iter().map(|v| v / top).collect())
}

/// One training record. Built from a count measurement alone; no object
/// appears anywhere in the training path.
#[derive(Clone)]
pub struct TrainingExample {
    pub counts: Vec<f64>,
    pub scale: CountScale,
    pub matrix: Arc<SystemMatrix>,
    pub input: EncoderInput,
}

impl TrainingExample {
    pub fn from_measurement(sino: &Sinogram, cache: &RayCache) -> Result<Self> {
        let scale = sino
            .counts
            .ok_or_else(|| Error::Data("training needs photon-count measurements".into()))?;
        if sino.values.iter().any(|&k| !(k >= 0.0) || !k.is_finite()) {
            return Err(Error::Data(
                "photon counts must be finite and nonnegative".into(),
            ));
        }
        Ok(TrainingExample {
            counts: sino.values.clone(),
            scale,
            matrix: Arc::new(cache.matrix(sino.bins, &sino.schedule.angles)),
            input: EncoderInput::from_measurement(sino)?,
        })
    }

    pub fn image_size(&self) -> usize {
        self.input.size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgraph::{Graph, Tensor, LOGVAR_MAX, LOGVAR_MIN};
    use crate::image::ImageGrid;
    use crate::phantoms::make_toy_objects;
    use crate::projector::{radon_forward, simulate_measurement, ScheduleKind};

    fn toy_measurement(obj: &ImageGrid, angle: usize, seed: u64) -> Sinogram {
        let s = AngleSchedule::from_indices(ScheduleKind::Toy, 2, vec![angle]).unwrap();
        let clean = radon_forward(obj, &s).unwrap();
        simulate_measurement(&clean, CountScale::new(1e4, 2.0).unwrap(), seed).unwrap()
    }

    fn toy_example(angle: usize, seed: u64) -> TrainingExample {
        let (o1, _) = make_toy_objects();
        TrainingExample::from_measurement(&toy_measurement(&o1, angle, seed), &RayCache::default())
            .unwrap()
    }

    fn std_dev(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    }

    #[test]
    fn architecture_limits() {
        assert!(ArchSpec::mlp(8).validate().is_ok());
        assert!(ArchSpec::mlp(16).validate().is_err());
        assert!(ArchSpec::unet(64).validate().is_ok());
        assert!(ArchSpec::unet(36).validate().is_err());
        let mut a = ArchSpec::unet(64);
        a.widths.pop();
        assert!(a.validate().is_err());
    }

    #[test]
    fn untrained_encoder_is_finite_and_pure() {
        let model = PvaeModel::<f64>::new(ArchSpec::unet(16), 2).unwrap();
        let sched =
            crate::projector::make_angle_schedule(ScheduleKind::UniformSparse, 4, 16, 0).unwrap();
        let mut img = ImageGrid::square(16);
        img.set(5, 7, 1.0);
        let clean = radon_forward(&img, &sched).unwrap();
        let m =
            simulate_measurement(&clean, CountScale::new(100.0, clean.max()).unwrap(), 1).unwrap();
        let input = EncoderInput::from_measurement(&m).unwrap();
        let a = encode_values(&model, &input).unwrap();
        assert_eq!(a.len(), 4);
        for level in &a {
            assert!(level.mean.iter().all(|v| v.is_finite()));
            assert!(level
                .logvar
                .iter()
                .all(|&v| (LOGVAR_MIN..=LOGVAR_MAX).contains(&v)));
        }
        assert_eq!(a, encode_values(&model, &input).unwrap());
        let wrong = EncoderInput {
            size: 8,
            recon: vec![0.0; 64],
            coverage: vec![1.0; 64],
        };
        assert!(matches!(
            encode_values(&model, &wrong),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn decoder_mean_is_nonnegative_and_deterministic() {
        for arch in [ArchSpec::mlp(2), ArchSpec::unet(8)] {
            let model = PvaeModel::<f64>::new(arch, 4).unwrap();
            let shapes = model.arch.latent_shapes();
            for i in 0..100u64 {
                let z: Vec<Tensor<f64>> = shapes
                    .iter()
                    .enumerate()
                    .map(|(l, s)| {
                        let mut t = crate::diffgraph::standard_normal::<f64>(s, i * 10 + l as u64);
                        t.data.iter_mut().for_each(|v| *v *= 3.0);
                        t
                    })
                    .collect();
                let (mean, lv) = decode_values(&model, &z).unwrap();
                assert!(mean.is_nonnegative());
                if i < 3 {
                    assert_eq!((mean, lv), decode_values(&model, &z).unwrap());
                }
            }
        }
    }

    #[test]
    fn decode_rejects_wrong_latents() {
        let model = PvaeModel::<f64>::new(ArchSpec::mlp(2), 4).unwrap();
        assert!(decode_values(&model, &[Tensor::zeros(&[3])]).is_err());
        assert!(decode_values(&model, &[Tensor::zeros(&[8]), Tensor::zeros(&[8])]).is_err());
    }

    #[test]
    fn untrained_kl_is_nonnegative() {
        let model = PvaeModel::<f64>::new(ArchSpec::mlp(2), 9).unwrap();
        for (angle, seed) in [(0, 1), (1, 2), (0, 3)] {
            let ex = toy_example(angle, seed);
            let mut g = Graph::new();
            let net = model.bind(&mut g);
            let t = elbo_loss(&mut g, &net, &ex, 1, 5).unwrap();
            assert!(g.value(t.kl).item() >= 0.0);
            let loss = g.value(t.loss).item();
            let parts = g.value(t.kl).item() - g.value(t.loglik).item();
            assert!((loss - parts).abs() <= 1e-9 * loss.abs());
        }
    }

    #[test]
    fn monte_carlo_spread_shrinks_with_samples() {
        let model = PvaeModel::<f64>::new(ArchSpec::mlp(2), 11).unwrap();
        let ex = toy_example(1, 4);
        let losses = |s: usize| -> Vec<f64> {
            (0..400)
                .map(|seed| {
                    let mut g = Graph::new();
                    let net = model.bind_frozen(&mut g);
                    let t = elbo_loss(&mut g, &net, &ex, s, seed).unwrap();
                    g.value(t.loss).item()
                })
                .collect()
        };
        let ratio = std_dev(&losses(1)) / std_dev(&losses(64));
        assert!((ratio - 8.0).abs() <= 0.3 * 8.0, "std ratio {ratio}");
    }

    #[test]
    fn count_free_measurements_are_rejected() {
        let (o1, _) = make_toy_objects();
        let s = AngleSchedule::from_indices(ScheduleKind::Toy, 2, vec![0]).unwrap();
        let clean = radon_forward(&o1, &s).unwrap();
        assert!(matches!(
            TrainingExample::from_measurement(&clean, &RayCache::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn single_sample_point_estimate_is_that_sample() {
        let model = PvaeModel::<f32>::new(ArchSpec::mlp(2), 1).unwrap();
        let ex = toy_example(0, 1);
        let one = reconstruct_point(&model, &ex.input, 1, 42).unwrap();
        let s = sample_posterior(&model, &ex.input, 1, 42).unwrap();
        assert_eq!(one, s[0]);
        assert!(reconstruct_point(&model, &ex.input, 0, 42).is_err());
    }

    #[test]
    fn point_estimate_variance_falls_as_one_over_s() {
        let model = PvaeModel::<f64>::new(ArchSpec::mlp(2), 6).unwrap();
        let ex = toy_example(1, 2);
        let spread = |s: usize| -> f64 {
            let px: Vec<f64> = (0..300)
                .map(|seed| {
                    reconstruct_point(&model, &ex.input, s, 1000 + seed)
                        .unwrap()
                        .values()[0]
                })
                .collect();
            std_dev(&px).powi(2)
        };
        let ratio = spread(1) / spread(16);
        assert!(
            (ratio - 16.0).abs() <= 0.35 * 16.0,
            "variance ratio {ratio}"
        );
    }

    #[test]
    fn coverage_is_normalized() {
        let sched =
            crate::projector::make_angle_schedule(ScheduleKind::UniformSparse, 5, 180, 0).unwrap();
        let c = coverage_map(16, &sched).unwrap();
        let top = c.iter().copied().fold(f64::MIN, f64::max);
        assert!((top - 1.0).abs() < 1e-15);
        assert!(c.iter().all(|&v| v >= 0.0));
        let toy = AngleSchedule::from_indices(ScheduleKind::Toy, 2, vec![1]).unwrap();
        assert!(coverage_map(2, &toy)
            .unwrap()
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let set: Vec<TrainingExample> = (0..12).map(|i| toy_example((i % 2) as usize, i)).collect();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 5,
            checkpoint_every: 2,
            seed: 8,
            ..TrainConfig::default()
        };
        let model = PvaeModel::<f32>::new(ArchSpec::mlp(2), 3).unwrap();
        let mut full = Trainer::new(model.clone(), cfg.clone(), 3).unwrap();
        full.run(&set, None, |_| {}).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let ck_dir = dir.path().join("ck");
        let mut first = Trainer::new(
            model,
            TrainConfig {
                epochs: 2,
                ..cfg.clone()
            },
            3,
        )
        .unwrap();
        first.run(&set, Some(&ck_dir), |_| {}).unwrap();
        let ck = Checkpoint::read(&ck_dir).unwrap();
        assert_eq!(ck.manifest.epoch, 2);
        assert_eq!(ck.model, first.model);
        let mut resumed = Trainer::resume(ck, cfg).unwrap();
        resumed.run(&set, None, |_| {}).unwrap();
        assert_eq!(resumed.model.params, full.model.params);
        assert_eq!(resumed.state.adam, full.state.adam);
        let losses = |t: &Trainer| t.state.trace.iter().map(|r| r.loss).collect::<Vec<_>>();
        assert_eq!(losses(&resumed), losses(&full));
    }

    #[test]
    fn checkpoint_files_are_reproducible() {
        let set: Vec<TrainingExample> = (0..6).map(|i| toy_example((i % 2) as usize, i)).collect();
        let dir = tempfile::tempdir().unwrap();
        let run = |name: &str| {
            let model = PvaeModel::<f32>::new(ArchSpec::mlp(2), 3).unwrap();
            let cfg = TrainConfig {
                epochs: 2,
                batch_size: 4,
                ..TrainConfig::default()
            };
            let mut t = Trainer::new(model, cfg, 3).unwrap();
            t.run(&set, Some(&dir.path().join(name)), |_| {}).unwrap();
        };
        run("a");
        run("b");
        for f in [
            "architecture.json",
            "params/enc0.w.pvt",
            "params/dec_head.b.pvt",
            "adam_m.pvt",
            "adam_v.pvt",
            "training.json",
        ] {
            let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }
}

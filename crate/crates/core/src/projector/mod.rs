//! Parallel-beam Radon operator, its adjoint, angle schedules and the Poisson
//! measurement model.

mod schedule;
mod siddon;

use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

pub use schedule::{make_angle_schedule, AngleSchedule, ScheduleKind};
pub use siddon::{trace_ray, AngleBlock, RayCache, SystemMatrix};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::rng;
use crate::tensorio;

/// Floor on Poisson rates; keeps `ln λ` finite.
pub const RATE_FLOOR: f64 = 1e-6;

/// Calibration that maps line integrals to expected counts:
/// `λ = photon_budget · s / normalizer + epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountScale {
    pub photon_budget: f64,
    pub normalizer: f64,
    pub epsilon: f64,
}

impl CountScale {
    pub fn new(photon_budget: f64, normalizer: f64) -> Result<Self> {
        if !(photon_budget > 0.0 && photon_budget.is_finite()) {
            return Err(Error::Config(format!(
                "photon budget must be > 0, got {photon_budget}"
            )));
        }
        if !(normalizer > 0.0 && normalizer.is_finite()) {
            return Err(Error::Config(format!(
                "sinogram normalizer must be > 0, got {normalizer}"
            )));
        }
        Ok(CountScale {
            photon_budget,
            normalizer,
            epsilon: RATE_FLOOR,
        })
    }

    /// Counts per unit line integral.
    pub fn gain(&self) -> f64 {
        self.photon_budget / self.normalizer
    }

    pub fn rate(&self, line_integral: f64) -> f64 {
        (self.gain() * line_integral + self.epsilon).max(self.epsilon)
    }

    /// Inverse of the rate map, clamped at zero.
    pub fn line_integral(&self, count: f64) -> f64 {
        ((count - self.epsilon) / self.gain()).max(0.0)
    }
}

/// Stacked projections, angle-major: `values[a * bins + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    pub schedule: AngleSchedule,
    pub bins: usize,
    pub values: Vec<f64>,
    /// Present when `values` are photon counts rather than line integrals.
    pub counts: Option<CountScale>,
}

impl Sinogram {
    pub fn new(schedule: AngleSchedule, bins: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != schedule.len() * bins {
            return Err(Error::shape(
                "Sinogram::new",
                format!(
                    "{} values for {} angles × {bins} bins",
                    values.len(),
                    schedule.len()
                ),
            ));
        }
        Ok(Sinogram {
            schedule,
            bins,
            values,
            counts: None,
        })
    }

    pub fn zeros(schedule: AngleSchedule, bins: usize) -> Self {
        let values = vec![0.0; schedule.len() * bins];
        Sinogram {
            schedule,
            bins,
            values,
            counts: None,
        }
    }

    pub fn n_angles(&self) -> usize {
        self.schedule.len()
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.n_angles(), self.bins]
    }

    pub fn projection(&self, a: usize) -> &[f64] {
        &self.values[a * self.bins..(a + 1) * self.bins]
    }

    pub fn is_counts(&self) -> bool {
        self.counts.is_some()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Line-integral values; counts are converted by inverting their scale.
    pub fn line_integrals(&self) -> Vec<f64> {
        match &self.counts {
            None => self.values.clone(),
            Some(scale) => self
                .values
                .iter()
                .map(|&c| scale.line_integral(c))
                .collect(),
        }
    }

    pub fn system_matrix(&self) -> SystemMatrix {
        SystemMatrix::new(self.bins, &self.schedule.angles)
    }
}

/// JSON sidecar stored next to a sinogram container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinogramSidecar {
    pub schedule: AngleSchedule,
    pub bins: usize,
    pub counts: Option<CountScale>,
    /// Noise seed, for measurements.
    pub seed: Option<u64>,
}

/// Sidecar path for a container path: `x.pvt` → `x.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the values as an `[angles, bins]` container plus its sidecar.
pub fn write_sinogram(path: &Path, sino: &Sinogram, seed: Option<u64>) -> Result<()> {
    tensorio::write_f64(path, &sino.shape(), &sino.values)?;
    let side = SinogramSidecar {
        schedule: sino.schedule.clone(),
        bins: sino.bins,
        counts: sino.counts,
        seed,
    };
    let json_path = sidecar_path(path);
    fs::write(&json_path, serde_json::to_vec_pretty(&side)?).map_err(|e| Error::io(&json_path, e))
}

pub fn read_sinogram(path: &Path) -> Result<(Sinogram, Option<u64>)> {
    let json_path = sidecar_path(path);
    let bytes = fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let side: SinogramSidecar = serde_json::from_slice(&bytes)?;
    let t = tensorio::read_tensor(path)?;
    if t.shape != [side.schedule.len(), side.bins] {
        return Err(Error::Container {
            path: path.to_path_buf(),
            reason: format!(
                "shape {:?} disagrees with the sidecar ({} angles × {} bins)",
                t.shape,
                side.schedule.len(),
                side.bins
            ),
        });
    }
    let mut sino = Sinogram::new(side.schedule, side.bins, t.to_f64())?;
    sino.counts = side.counts;
    Ok((sino, side.seed))
}

/// Noiseless line integrals of `image` on `schedule`.
pub fn radon_forward(image: &ImageGrid, schedule: &AngleSchedule) -> Result<Sinogram> {
    if !image.is_square() {
        return Err(Error::shape(
            "radon_forward",
            format!(
                "image must be square, got {}x{}",
                image.width(),
                image.height()
            ),
        ));
    }
    let n = image.side();
    let r = SystemMatrix::new(n, &schedule.angles);
    Sinogram::new(schedule.clone(), n, r.forward(image.values()))
}

/// Backprojection `Rᵀ y` onto an image with one pixel column per detector bin.
pub fn radon_adjoint(sino: &Sinogram) -> ImageGrid {
    let n = sino.bins;
    let r = SystemMatrix::new(n, &sino.schedule.angles);
    ImageGrid::from_values(n, n, r.adjoint(&sino.values)).expect("adjoint has n² pixels")
}

/// Draws Poisson counts with rates `scale.rate(s_i)`.
pub fn simulate_measurement(
    noiseless: &Sinogram,
    scale: CountScale,
    seed: u64,
) -> Result<Sinogram> {
    if noiseless.is_counts() {
        return Err(Error::Data("sinogram already holds counts".into()));
    }
    let mut r = rng::rng(seed);
    let values = noiseless
        .values
        .iter()
        .map(|&s| {
            let lambda = scale.rate(s);
            Poisson::new(lambda)
                .map(|p| p.sample(&mut r))
                .map_err(|e| Error::Numerical(format!("Poisson rate {lambda}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Sinogram {
        schedule: noiseless.schedule.clone(),
        bins: noiseless.bins,
        values,
        counts: Some(scale),
    })
}

/// `ln P(k | λ) = k ln λ − λ − ln k!` for one bin; `λ` is floored at [`RATE_FLOOR`].
pub fn poisson_term(count: f64, rate: f64) -> f64 {
    let lambda = rate.max(RATE_FLOOR);
    count * lambda.ln() - lambda - ln_gamma(count + 1.0)
}

/// Joint log-probability of independent Poisson bins.
pub fn poisson_loglik(counts: &[f64], rates: &[f64]) -> f64 {
    assert_eq!(counts.len(), rates.len());
    counts
        .iter()
        .zip(rates)
        .map(|(&k, &l)| poisson_term(k, l))
        .sum()
}

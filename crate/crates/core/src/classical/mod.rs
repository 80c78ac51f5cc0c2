//! Baseline reconstructions: filtered backprojection, SIRT and
//! total-variation regularized least squares.

mod fbp;
mod sirt;
mod tv;

use serde::{Deserialize, Serialize};

pub use fbp::{fbp_reconstruct, ramp_filter};
pub use sirt::{sirt_reconstruct, sirt_with_trace};
pub use tv::{gradient, tv_reconstruct, tv_seminorm, TvReport};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::projector::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Fbp,
    Sirt,
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    Ramp,
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub algorithm: Algorithm,
    pub filter: Filter,
    pub iterations: usize,
    /// SIRT relaxation α.
    pub relaxation: f64,
    pub tv_lambda: f64,
    /// Chambolle–Pock dual/primal steps; derived from the operator norm when unset.
    pub tv_sigma: Option<f64>,
    pub tv_tau: Option<f64>,
    pub nonnegative: bool,
}

impl ReconConfig {
    pub fn fbp(filter: Filter) -> Self {
        ReconConfig {
            algorithm: Algorithm::Fbp,
            filter,
            iterations: 1,
            relaxation: 1.0,
            tv_lambda: 0.0,
            tv_sigma: None,
            tv_tau: None,
            nonnegative: false,
        }
    }

    pub fn sirt(iterations: usize) -> Self {
        ReconConfig {
            algorithm: Algorithm::Sirt,
            iterations,
            nonnegative: true,
            ..Self::fbp(Filter::Ramp)
        }
    }

    pub fn tv(lambda: f64) -> Self {
        ReconConfig {
            algorithm: Algorithm::Tv,
            iterations: 300,
            tv_lambda: lambda,
            nonnegative: true,
            ..Self::fbp(Filter::Ramp)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be ≥ 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::Config(format!(
                "relaxation {} outside (0, 2)",
                self.relaxation
            )));
        }
        if !(self.tv_lambda >= 0.0) {
            return Err(Error::Config(format!(
                "tv_lambda {} must be ≥ 0",
                self.tv_lambda
            )));
        }
        Ok(())
    }
}

/// Dispatches on `cfg.algorithm`.
pub fn reconstruct(sino: &Sinogram, cfg: &ReconConfig) -> Result<ImageGrid> {
    match cfg.algorithm {
        Algorithm::Fbp => fbp_reconstruct(sino, cfg),
        Algorithm::Sirt => sirt_reconstruct(sino, cfg),
        Algorithm::Tv => tv_reconstruct(sino, cfg).map(|(img, _)| img),
    }
}

fn check_input(sino: &Sinogram) -> Result<()> {
    if sino.n_angles() == 0 {
        return Err(Error::Data("sinogram has no angles".into()));
    }
    if sino.values.len() != sino.n_angles() * sino.bins {
        return Err(Error::shape(
            "reconstruct",
            "sinogram values do not match its shape",
        ));
    }
    Ok(())
}

use super::{check_input, ReconConfig};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::projector::Sinogram;

const DIVERGENCE_RUN: usize = 10;

fn inverse_or_zero(v: f64) -> f64 {
    if v > 1e-12 {
        1.0 / v
    } else {
        0.0
    }
}

/// SIRT: `x ← clamp≥0(x + α·C·Rᵀ·W·(m − R x))` with `C = 1/(Rᵀ1)` and
/// `W = 1/(R1)`, starting from zero.
pub fn sirt_reconstruct(sino: &Sinogram, cfg: &ReconConfig) -> Result<ImageGrid> {
    let x0 = ImageGrid::square(sino.bins);
    sirt_with_trace(sino, cfg, &x0).map(|(img, _)| img)
}

/// SIRT from `x0`, returning the final iterate and the weighted data
/// residual `‖m − R x‖_W` before each update.
pub fn sirt_with_trace(
    sino: &Sinogram,
    cfg: &ReconConfig,
    x0: &ImageGrid,
) -> Result<(ImageGrid, Vec<f64>)> {
    cfg.validate()?;
    check_input(sino)?;
    run(sino, cfg, x0)
}

fn run(sino: &Sinogram, cfg: &ReconConfig, x0: &ImageGrid) -> Result<(ImageGrid, Vec<f64>)> {
    let n = sino.bins;
    if x0.width() != n || x0.height() != n {
        return Err(Error::shape(
            "sirt",
            format!("initial image must be {n}x{n}"),
        ));
    }
    let r = sino.system_matrix();
    let m = sino.line_integrals();
    let w: Vec<f64> = r.row_sums().into_iter().map(inverse_or_zero).collect();
    let c: Vec<f64> = r.col_sums().into_iter().map(inverse_or_zero).collect();

    let mut x = x0.values().to_vec();
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut rising = 0;
    let mut resid = vec![0.0; m.len()];
    for _ in 0..cfg.iterations {
        r.forward_into(&x, &mut resid);
        let mut norm = 0.0;
        for ((ri, &mi), &wi) in resid.iter_mut().zip(&m).zip(&w) {
            let d = mi - *ri;
            norm += wi * d * d;
            *ri = wi * d;
        }
        let norm = norm.sqrt();
        if !norm.is_finite() {
            return Err(Error::Numerical("SIRT residual is not finite".into()));
        }
        if let Some(&prev) = trace.last() {
            rising = if norm > prev { rising + 1 } else { 0 };
        }
        trace.push(norm);
        if rising >= DIVERGENCE_RUN {
            return Err(Error::Diverged {
                consecutive: rising,
                residuals: trace,
            });
        }
        let update = r.adjoint(&resid);
        for ((xi, &ui), &ci) in x.iter_mut().zip(&update).zip(&c) {
            *xi += cfg.relaxation * ci * ui;
            if cfg.nonnegative && *xi < 0.0 {
                *xi = 0.0;
            }
        }
    }
    Ok((ImageGrid::from_values(n, n, x)?, trace))
}

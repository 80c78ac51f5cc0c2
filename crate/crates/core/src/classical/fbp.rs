use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{check_input, Filter, ReconConfig};
use crate::error::Result;
use crate::image::ImageGrid;
use crate::projector::Sinogram;

/// Frequency response of the discrete ramp filter on a length-`size` grid.
///
/// Built from the band-limited spatial kernel (`h[0] = 1/4`,
/// `h[k odd] = −1/(πk)²`), which avoids the DC bias of sampling `|f|`
/// directly. The factor 2 pairs with the `π / (2·angles)` backprojection
/// scale.
pub fn ramp_filter(size: usize, filter: Filter) -> Vec<f64> {
    let mut h = vec![Complex::new(0.0, 0.0); size];
    h[0].re = 0.25;
    for k in 1..=size / 2 {
        if k % 2 == 1 {
            let v = -1.0 / (PI * k as f64).powi(2);
            h[k].re = v;
            h[size - k].re = v;
        }
    }
    FftPlanner::new().plan_fft_forward(size).process(&mut h);
    h.iter()
        .enumerate()
        .map(|(i, c)| {
            let f = i.min(size - i) as f64 / size as f64;
            let window = match filter {
                Filter::Ramp => 1.0,
                Filter::Hann => 0.5 * (1.0 + (2.0 * PI * f).cos()),
            };
            2.0 * c.re * window
        })
        .collect()
}

/// Filtered backprojection. Count sinograms are first mapped back to line
/// integrals.
pub fn fbp_reconstruct(sino: &Sinogram, cfg: &ReconConfig) -> Result<ImageGrid> {
    cfg.validate()?;
    check_input(sino)?;
    let n = sino.bins;
    let data = sino.line_integrals();
    let size = (2 * n).next_power_of_two().max(64);
    let response = ramp_filter(size, cfg.filter);

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut filtered = vec![0.0; data.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); size];
    for a in 0..sino.n_angles() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(&data[a * n..(a + 1) * n]) {
            b.re = v;
        }
        fwd.process(&mut buf);
        for (b, &r) in buf.iter_mut().zip(&response) {
            *b *= r;
        }
        inv.process(&mut buf);
        for (dst, b) in filtered[a * n..(a + 1) * n].iter_mut().zip(&buf) {
            *dst = b.re / size as f64;
        }
    }

    let mut img = ImageGrid::square(n);
    let trig: Vec<(f64, f64)> = sino.schedule.angles.iter().map(|a| a.sin_cos()).collect();
    let scale = PI / (2.0 * sino.n_angles() as f64);
    for row in 0..n {
        for col in 0..n {
            let (x, y) = img.pixel_center(row, col);
            let mut acc = 0.0;
            for (a, &(sin, cos)) in trig.iter().enumerate() {
                let u = x * cos + y * sin + n as f64 / 2.0 - 0.5;
                let i0 = u.floor();
                let frac = u - i0;
                let proj = &filtered[a * n..(a + 1) * n];
                let at = |i: f64| {
                    if i >= 0.0 && i < n as f64 {
                        proj[i as usize]
                    } else {
                        0.0
                    }
                };
                acc += (1.0 - frac) * at(i0) + frac * at(i0 + 1.0);
            }
            let v = acc * scale;
            img.set(row, col, if cfg.nonnegative { v.max(0.0) } else { v });
        }
    }
    Ok(img)
}

//! Exact Bayesian posterior over a finite candidate set, marginal histograms
//! and total-variation distance.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::projector::{poisson_loglik, CountScale, Sinogram, SystemMatrix};

/// Posterior over the candidate objects and the per-pixel marginals it
/// induces.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPosterior {
    pub probabilities: Vec<f64>,
    /// For each pixel, `(value, probability)` pairs with distinct values.
    pub marginals: Vec<Vec<(f64, f64)>>,
}

impl ToyPosterior {
    /// Probability mass the pixel marginal assigns within `±tol` of `value`.
    pub fn mass_near(&self, pixel: usize, value: f64, tol: f64) -> f64 {
        self.marginals[pixel]
            .iter()
            .filter(|(v, _)| (v - value).abs() <= tol)
            .map(|(_, p)| p)
            .sum()
    }
}

/// `P(O_k | M) ∝ prior_k · P(M | O_k)` for Poisson counts `measurement`.
pub fn exact_toy_posterior(
    measurement: &Sinogram,
    candidates: &[ImageGrid],
    prior: &[f64],
) -> Result<ToyPosterior> {
    let scale: CountScale = measurement
        .counts
        .ok_or_else(|| Error::Data("oracle needs a count measurement".into()))?;
    if candidates.is_empty() || candidates.len() != prior.len() {
        return Err(Error::Data(format!(
            "{} candidates with {} prior entries",
            candidates.len(),
            prior.len()
        )));
    }
    if prior.iter().any(|&p| p < 0.0) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Data("prior must be a probability vector".into()));
    }
    let n = measurement.bins;
    let r = SystemMatrix::new(n, &measurement.schedule.angles);
    let log_w = candidates
        .iter()
        .zip(prior)
        .map(|(c, &p)| {
            if c.width() != n || c.height() != n {
                return Err(Error::shape(
                    "exact_toy_posterior",
                    "candidate size differs from detector",
                ));
            }
            if p == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let rates: Vec<f64> = r
                .forward(c.values())
                .into_iter()
                .map(|s| scale.rate(s))
                .collect();
            Ok(p.ln() + poisson_loglik(&measurement.values, &rates))
        })
        .collect::<Result<Vec<f64>>>()?;
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|&l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let probabilities: Vec<f64> = w.iter().map(|v| v / z).collect();

    let pixels = candidates[0].len();
    let marginals = (0..pixels)
        .map(|i| {
            let mut m: Vec<(f64, f64)> = Vec::new();
            for (c, &p) in candidates.iter().zip(&probabilities) {
                let v = c.values()[i];
                match m.iter_mut().find(|(x, _)| *x == v) {
                    Some(e) => e.1 += p,
                    None => m.push((v, p)),
                }
            }
            m.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            m
        })
        .collect();
    Ok(ToyPosterior {
        probabilities,
        marginals,
    })
}

/// Equal-width bins identified by their centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bins {
    pub first_center: f64,
    pub width: f64,
    pub count: usize,
}

impl Default for Bins {
    /// Centers −0.5, −0.4, …, 1.5, so pixel values 0 and 1 fall on centers.
    fn default() -> Self {
        Bins {
            first_center: -0.5,
            width: 0.1,
            count: 21,
        }
    }
}

impl Bins {
    /// Bin of `v`; values beyond the outer edges land in the end bins.
    pub fn index(&self, v: f64) -> usize {
        let k = ((v - self.first_center) / self.width).round();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.count - 1)
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        self.first_center + i as f64 * self.width
    }

    /// Lower and upper edge of bin `i`.
    pub fn edges(&self, i: usize) -> (f64, f64) {
        let c = self.center(i);
        (c - self.width / 2.0, c + self.width / 2.0)
    }
}

/// Normalized per-pixel histograms of a set of image samples.
pub fn marginal_histograms(samples: &[ImageGrid], bins: &Bins) -> Result<Vec<Vec<f64>>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Data("marginal histograms need at least one sample".into()))?;
    let pixels = first.len();
    let mut h = vec![vec![0.0; bins.count]; pixels];
    for s in samples {
        if s.len() != pixels {
            return Err(Error::shape(
                "marginal_histograms",
                "samples differ in size",
            ));
        }
        for (p, &v) in s.values().iter().enumerate() {
            h[p][bins.index(v)] += 1.0;
        }
    }
    let n = samples.len() as f64;
    for row in &mut h {
        row.iter_mut().for_each(|c| *c /= n);
    }
    Ok(h)
}

/// Bins the oracle's discrete marginals onto the same grid.
pub fn posterior_histograms(post: &ToyPosterior, bins: &Bins) -> Vec<Vec<f64>> {
    post.marginals
        .iter()
        .map(|m| {
            let mut h = vec![0.0; bins.count];
            for &(v, p) in m {
                h[bins.index(v)] += p;
            }
            h
        })
        .collect()
}

/// `½ Σ |a_i − b_i|` after normalizing both histograms.
pub fn tv_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(
            "tv_distance",
            format!("{} bins vs {} bins", a.len(), b.len()),
        ));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::Data("histograms must have positive mass".into()));
    }
    Ok(0.5
        * a.iter()
            .zip(b)
            .map(|(x, y)| (x / sa - y / sb).abs())
            .sum::<f64>())
}

/// Writes `measurement_id, p_0, …, p_{K−1}, pixel_0, …` rows; each pixel
/// cell lists `value:probability` pairs separated by `;`.
pub fn write_posterior_csv(path: &Path, rows: &[(usize, ToyPosterior)]) -> Result<()> {
    let mut out = String::new();
    if let Some((_, first)) = rows.first() {
        out.push_str("measurement_id");
        for k in 0..first.probabilities.len() {
            write!(out, ",p_{k}").unwrap();
        }
        for i in 0..first.marginals.len() {
            write!(out, ",pixel_{i}").unwrap();
        }
        out.push('\n');
    }
    for (id, post) in rows {
        write!(out, "{id}").unwrap();
        for p in &post.probabilities {
            write!(out, ",{p:.12e}").unwrap();
        }
        for m in &post.marginals {
            let cell: Vec<String> = m.iter().map(|(v, p)| format!("{v}:{p:.12e}")).collect();
            write!(out, ",{}", cell.join(";")).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantoms::make_toy_objects;
    use crate::projector::{radon_forward, simulate_measurement, AngleSchedule, ScheduleKind};
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    fn toy_measurement(object: &ImageGrid, angle: usize, budget: f64, seed: u64) -> Sinogram {
        let sched = AngleSchedule::from_indices(ScheduleKind::Toy, 2, vec![angle]).unwrap();
        let clean = radon_forward(object, &sched).unwrap();
        simulate_measurement(&clean, CountScale::new(budget, 2.0).unwrap(), seed).unwrap()
    }

    #[test]
    fn half_pi_measurement_returns_prior() {
        let (o1, o2) = make_toy_objects();
        let m = toy_measurement(&o1, 1, 1e4, 3);
        let post = exact_toy_posterior(&m, &[o1, o2], &[0.5, 0.5]).unwrap();
        assert_eq!(post.probabilities, vec![0.5, 0.5]);
        for px in 0..4 {
            assert!((post.mass_near(px, 0.0, 0.01) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_prior_is_kept() {
        let (o1, o2) = make_toy_objects();
        let m = toy_measurement(&o2, 0, 1e4, 4);
        let post = exact_toy_posterior(&m, &[o1, o2], &[1.0, 0.0]).unwrap();
        assert_eq!(post.probabilities, vec![1.0, 0.0]);
    }

    #[test]
    fn angle_zero_is_decisive() {
        let (o1, o2) = make_toy_objects();
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|&s| {
                let m = toy_measurement(&o1, 0, 1e4, s);
                exact_toy_posterior(&m, &[o1.clone(), o2.clone()], &[0.5, 0.5])
                    .unwrap()
                    .probabilities[0]
                    > 0.999
            })
            .count();
        assert!(hits as f64 / trials as f64 > 0.99, "{hits}");
    }

    #[test]
    fn posterior_sums_to_one_and_ignores_angle_order() {
        let (o1, o2) = make_toy_objects();
        let sched = AngleSchedule::from_indices(ScheduleKind::Full, 2, vec![0, 1]).unwrap();
        let clean = radon_forward(&o1, &sched).unwrap();
        let scale = CountScale::new(3.0, 2.0).unwrap();
        let m = simulate_measurement(&clean, scale, 8).unwrap();
        let post = exact_toy_posterior(&m, &[o1.clone(), o2.clone()], &[0.3, 0.7]).unwrap();
        assert!((post.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // Swap the two projections together with their angles.
        let mut swapped = m.clone();
        swapped.schedule.angles.reverse();
        swapped.values = [m.projection(1), m.projection(0)].concat();
        let post2 = exact_toy_posterior(&swapped, &[o1, o2], &[0.3, 0.7]).unwrap();
        for (a, b) in post.probabilities.iter().zip(&post2.probabilities) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_distance_values() {
        assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((tv_distance(&[0.5, 0.5], &[0.75, 0.25]).unwrap() - 0.25).abs() < 1e-15);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn candidate_values_sit_on_bin_centers() {
        let b = Bins::default();
        assert_eq!(b.index(0.0), 5);
        assert_eq!(b.index(1.0), 15);
        assert!((b.center(5) - 0.0).abs() < 1e-12);
        assert!((b.center(15) - 1.0).abs() < 1e-12);
        assert_eq!(b.index(-3.0), 0);
        assert_eq!(b.index(9.0), 20);
        assert!((b.center(0) + 0.5).abs() < 1e-12 && (b.center(20) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_fill_one_bin() {
        let (o1, _) = make_toy_objects();
        let h = marginal_histograms(&vec![o1; 50], &Bins::default()).unwrap();
        for px in &h {
            assert_eq!(px.iter().filter(|&&c| c > 0.0).count(), 1);
            assert_eq!(px.iter().sum::<f64>(), 1.0);
        }
        assert!(marginal_histograms(&[], &Bins::default()).is_err());
    }

    #[test]
    fn histogram_normalization_at_twenty_thousand() {
        let mut r = rng::rng(5);
        let samples: Vec<ImageGrid> = (0..20_000)
            .map(|_| {
                ImageGrid::from_values(2, 2, (0..4).map(|_| r.random_range(-1.0..2.0)).collect())
                    .unwrap()
            })
            .collect();
        for px in marginal_histograms(&samples, &Bins::default()).unwrap() {
            assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_samples_match_analytic_bin_masses() {
        use statrs::distribution::{ContinuousCDF, Normal as N};
        let (mu, sd, n) = (0.4, 0.3, 20_000usize);
        let mut r = rng::rng(6);
        let d = Normal::new(mu, sd).unwrap();
        let samples: Vec<ImageGrid> = (0..n)
            .map(|_| ImageGrid::from_values(1, 1, vec![d.sample(&mut r)]).unwrap())
            .collect();
        let bins = Bins::default();
        let h = &marginal_histograms(&samples, &bins).unwrap()[0];
        let cdf = N::new(mu, sd).unwrap();
        for (i, &obs) in h.iter().enumerate() {
            let (lo, hi) = bins.edges(i);
            let lo = if i == 0 { f64::NEG_INFINITY } else { lo };
            let hi = if i + 1 == bins.count {
                f64::INFINITY
            } else {
                hi
            };
            let p = cdf.cdf(hi) - cdf.cdf(lo);
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (obs - p).abs() <= 3.0 * sigma + 1e-12,
                "bin {i}: {obs} vs {p}"
            );
        }
    }

    use rand::Rng;
}

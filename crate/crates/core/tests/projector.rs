//! Operator properties of the projector and the Poisson measurement model.

use proptest::prelude::*;
use pvae_core::projector::{
    make_angle_schedule, poisson_loglik, poisson_term, radon_adjoint, radon_forward,
    simulate_measurement, AngleSchedule, CountScale, ScheduleKind, Sinogram,
};
use pvae_core::{rng, ImageGrid};
use rand::Rng;

fn random_image(n: usize, seed: u64) -> ImageGrid {
    let mut r = rng::rng(seed);
    ImageGrid::from_values(
        n,
        n,
        (0..n * n).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn random_sinogram(sched: &AngleSchedule, n: usize, seed: u64) -> Sinogram {
    let mut r = rng::rng(seed);
    let v = (0..n * sched.len())
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    Sinogram::new(sched.clone(), n, v).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn adjoint_identity_at_32() {
    for pair in 0..20u64 {
        let sched = make_angle_schedule(ScheduleKind::RandomSparse, 17, 180, pair).unwrap();
        let x = random_image(32, 2 * pair);
        let y = random_sinogram(&sched, 32, 2 * pair + 1);
        let lhs = dot(&radon_forward(&x, &sched).unwrap().values, &y.values);
        let rhs = dot(x.values(), radon_adjoint(&y).values());
        assert!(
            (lhs - rhs).abs() <= 1e-5 * lhs.abs().max(rhs.abs()),
            "pair {pair}: {lhs} vs {rhs}"
        );
    }
}

#[test]
fn linearity_at_32() {
    let sched = make_angle_schedule(ScheduleKind::Full, 45, 45, 0).unwrap();
    for seed in 0..5u64 {
        let (x, y) = (random_image(32, seed), random_image(32, seed + 100));
        let (a, b) = (1.7, -0.3);
        let combo = ImageGrid::from_values(
            32,
            32,
            x.values()
                .iter()
                .zip(y.values())
                .map(|(p, q)| a * p + b * q)
                .collect(),
        )
        .unwrap();
        let lhs = radon_forward(&combo, &sched).unwrap().values;
        let (rx, ry) = (
            radon_forward(&x, &sched).unwrap().values,
            radon_forward(&y, &sched).unwrap().values,
        );
        let rhs: Vec<f64> = rx.iter().zip(&ry).map(|(p, q)| a * p + b * q).collect();
        let err = lhs
            .iter()
            .zip(&rhs)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = rhs.iter().map(|q| q * q).sum::<f64>().sqrt();
        assert!(err <= 1e-6 * norm, "relative {}", err / norm);
    }
}

#[test]
fn projections_conserve_mass_inside_the_disk() {
    let n = 64;
    let mut r = rng::rng(4);
    let mut img = ImageGrid::square(n);
    for row in 0..n {
        for col in 0..n {
            let (x, y) = img.pixel_center(row, col);
            // Pixel corners stay inside the inscribed circle.
            if (x.abs() + 0.5).hypot(y.abs() + 0.5) < n as f64 / 2.0 {
                img.set(row, col, r.random_range(0.0..1.0));
            }
        }
    }
    let mass = img.sum();
    let sched = make_angle_schedule(ScheduleKind::Full, 180, 180, 0).unwrap();
    let sino = radon_forward(&img, &sched).unwrap();
    for a in 0..sched.len() {
        let s: f64 = sino.projection(a).iter().sum();
        assert!((s - mass).abs() <= 0.01 * mass, "angle {a}: {s} vs {mass}");
    }
}

#[test]
fn schedule_examples() {
    let full = make_angle_schedule(ScheduleKind::Full, 180, 180, 0).unwrap();
    for (i, a) in full.angles.iter().enumerate() {
        assert!((a - i as f64 * std::f64::consts::PI / 180.0).abs() < 1e-15);
    }
    let uni = make_angle_schedule(ScheduleKind::UniformSparse, 20, 180, 0).unwrap();
    assert_eq!(uni.indices, (0..20).map(|i| 9 * i).collect::<Vec<_>>());
    let r1 = make_angle_schedule(ScheduleKind::RandomSparse, 20, 180, 11).unwrap();
    let r2 = make_angle_schedule(ScheduleKind::RandomSparse, 20, 180, 11).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.indices.len(), 20);
    assert!(r1.indices.windows(2).all(|w| w[0] < w[1]));
    assert!(make_angle_schedule(ScheduleKind::UniformSparse, 181, 180, 0).is_err());
}

#[test]
fn counts_approach_the_normalized_sinogram() {
    let mut img = ImageGrid::square(32);
    for row in 8..24 {
        for col in 10..20 {
            img.set(row, col, 1.0);
        }
    }
    let sched = make_angle_schedule(ScheduleKind::UniformSparse, 10, 180, 0).unwrap();
    let clean = radon_forward(&img, &sched).unwrap();
    let budget = 1e6;
    let scale = CountScale::new(budget, clean.max()).unwrap();
    let noisy = simulate_measurement(&clean, scale, 1).unwrap();
    let target: Vec<f64> = clean.values.iter().map(|s| s / clean.max()).collect();
    let got: Vec<f64> = noisy.values.iter().map(|k| k / budget).collect();
    let err = got
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = target.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(err / norm < 0.01, "relative error {}", err / norm);
    assert!(noisy.values.iter().all(|k| *k >= 0.0 && k.fract() == 0.0));
}

fn single_bin_draws(rate: f64, draws: u64) -> Vec<f64> {
    let sched = AngleSchedule::from_indices(ScheduleKind::Toy, 2, vec![0]).unwrap();
    // One bin at line integral 1 on a 1-pixel detector.
    let clean = Sinogram::new(sched, 1, vec![1.0]).unwrap();
    let scale = CountScale::new(rate - 1e-6, 1.0).unwrap();
    (0..draws)
        .map(|s| simulate_measurement(&clean, scale, s).unwrap().values[0])
        .collect()
}

#[test]
fn poisson_mean_at_rate_five() {
    let n = 10_000;
    let k = single_bin_draws(5.0, n);
    let mean = k.iter().sum::<f64>() / n as f64;
    // 3σ/√n with σ = √5.
    assert!(
        (mean - 5.0).abs() <= 3.0 * 5f64.sqrt() / (n as f64).sqrt(),
        "mean {mean}"
    );
}

#[test]
fn fano_factor_at_rate_ten() {
    let n = 10_000;
    let k = single_bin_draws(10.0, n);
    let mean = k.iter().sum::<f64>() / n as f64;
    let var = k.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(
        (var / mean - 1.0).abs() <= 0.05,
        "Fano factor {}",
        var / mean
    );
}

proptest! {
    #[test]
    fn loglik_is_additive_over_bins(k in prop::collection::vec(0u32..50, 1..20), seed in 0u64..1000) {
        let mut r = rng::rng(seed);
        let counts: Vec<f64> = k.iter().map(|&v| v as f64).collect();
        let rates: Vec<f64> = counts.iter().map(|_| r.random_range(0.01..40.0)).collect();
        let total = poisson_loglik(&counts, &rates);
        let parts: f64 = counts.iter().zip(&rates).map(|(&c, &l)| poisson_term(c, l)).sum();
        prop_assert!((total - parts).abs() <= 1e-9 * total.abs().max(1.0));
    }

    #[test]
    fn detector_flips_under_half_turn(seed in 0u64..500, a in 0.0f64..3.1) {
        let img = random_image(12, seed);
        let s1 = AngleSchedule { kind: ScheduleKind::Full, source_count: 1, indices: vec![0], angles: vec![a] };
        let s2 = AngleSchedule { angles: vec![a + std::f64::consts::PI], ..s1.clone() };
        let p1 = radon_forward(&img, &s1).unwrap().values;
        let mut p2 = radon_forward(&img, &s2).unwrap().values;
        p2.reverse();
        for (x, y) in p1.iter().zip(&p2) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}

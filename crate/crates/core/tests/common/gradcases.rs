//! Finite-difference cases for every graph primitive and for the full ELBO.
//! Each case returns the per-input relative errors of its gradient check.

#![allow(dead_code)]

use std::sync::Arc;

use pvae_core::diffgraph::gradcheck::check;
use pvae_core::diffgraph::{
    kl_std_normal, reparameterize, standard_normal, GaussianParams, Graph, LinearMap, Tensor, Var,
};
use pvae_core::phantoms::make_toy_objects;
use pvae_core::projector::{
    make_angle_schedule, radon_forward, simulate_measurement, AngleSchedule, CountScale, RayCache,
    ScheduleKind, SystemMatrix,
};
use pvae_core::pvae::{elbo_loss, ArchSpec, Bound, PvaeModel, TrainingExample};
use pvae_core::{rng, ImageGrid, Result};
use rand::Rng;

pub const STEP: f64 = 1e-4;
pub const TOL64: f64 = 1e-4;
/// The full graph has hundreds of leaky-ReLU units, so a 1e-4 stencil can
/// straddle a kink. A narrower one keeps the check on a smooth piece.
pub const ELBO_STEP: f64 = 1e-6;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    standard_normal(shape, seed)
}

/// Values bounded away from zero so kinks stay outside the difference stencil.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut t = random(shape, seed);
    t.data.iter_mut().for_each(|v| *v += 0.05 * v.signum());
    t
}

fn positive(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::rng(seed);
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| r.random_range(0.5..2.0)).collect(),
    )
}

/// `Σ w ⊙ y` with fixed random `w`, so the upstream gradient is not all ones.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let w = g.input(random(g.shape(y), seed));
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

pub fn dense() -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.dense(v[0], v[1], v[2])?;
        project(g, y, 100)
    };
    let errs = check(
        &f,
        &[random(&[3, 5], 1), random(&[4, 5], 2), random(&[4], 3)],
        STEP,
    )
    .unwrap();
    out.push(("dense", errs));
    out
}

pub fn conv2d() -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.conv2d(v[0], v[1], v[2])?;
        project(g, y, 101)
    };
    let errs = check(
        &f,
        &[
            random(&[2, 5, 4], 4),
            random(&[3, 2, 3, 3], 5),
            random(&[3], 6),
        ],
        STEP,
    )
    .unwrap();
    out.push(("conv2d", errs));
    out
}

pub fn pooling_and_upsampling() -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    let down = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.downsample(v[0])?;
        project(g, y, 102)
    };
    out.push((
        "downsample",
        check(&down, &[random(&[2, 4, 6], 7)], STEP).unwrap(),
    ));
    let up = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.upsample(v[0])?;
        project(g, y, 103)
    };
    out.push((
        "upsample",
        check(&up, &[random(&[2, 3, 2], 8)], STEP).unwrap(),
    ));
    out
}

pub fn elementwise_unary() -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    type Unary = fn(&mut Graph<f64>, Var) -> Var;
    let cases: [(&str, Unary, Tensor<f64>); 7] = [
        (
            "leaky_relu",
            |g, x| g.leaky_relu(x),
            away_from_zero(&[12], 9),
        ),
        ("softplus", |g, x| g.softplus(x), random(&[12], 10)),
        ("exp", |g, x| g.exp(x), random(&[12], 11)),
        ("ln", |g, x| g.ln(x), positive(&[12], 12)),
        ("scale", |g, x| g.scale(x, -2.5), random(&[12], 13)),
        ("add_scalar", |g, x| g.add_scalar(x, 0.7), random(&[12], 14)),
        (
            "clamp",
            |g, x| g.clamp(x, -0.5, 0.5),
            away_from_zero(&[12], 15).map_to(|v| v * 0.2 + 0.9 * v.signum()),
        ),
    ];
    for (name, op, x) in cases {
        let f = move |g: &mut Graph<f64>, v: &[Var]| {
            let y = op(g, v[0]);
            project(g, y, 104)
        };
        out.push((name, check(&f, &[x], STEP).unwrap()));
    }
    out
}

trait MapTo {
    fn map_to(self, f: impl Fn(f64) -> f64) -> Self;
}

impl MapTo for Tensor<f64> {
    fn map_to(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }
}

pub fn binary_and_structural() -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    let (a, b) = (random(&[2, 3], 16), random(&[2, 3], 17));
    let add = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.add(v[0], v[1])?;
        project(g, y, 105)
    };
    out.push(("add", check(&add, &[a.clone(), b.clone()], STEP).unwrap()));
    let sub = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.sub(v[0], v[1])?;
        project(g, y, 106)
    };
    out.push(("sub", check(&sub, &[a.clone(), b.clone()], STEP).unwrap()));
    let mul = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.mul(v[0], v[1])?;
        project(g, y, 107)
    };
    out.push(("mul", check(&mul, &[a.clone(), b.clone()], STEP).unwrap()));
    let concat = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.concat(&[v[0], v[1], v[0]])?;
        project(g, y, 108)
    };
    out.push((
        "concat",
        check(
            &concat,
            &[random(&[1, 2, 2], 18), random(&[3, 2, 2], 19)],
            STEP,
        )
        .unwrap(),
    ));
    let slice = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.slice(v[0], 1, 2)?;
        project(g, y, 109)
    };
    out.push((
        "slice",
        check(&slice, &[random(&[4, 3], 20)], STEP).unwrap(),
    ));
    let reshape = |g: &mut Graph<f64>, v: &[Var]| {
        let y = g.reshape(v[0], &[3, 2])?;
        project(g, y, 110)
    };
    out.push(("reshape", check(&reshape, &[a.clone()], STEP).unwrap()));
    let sum = |g: &mut Graph<f64>, v: &[Var]| {
        let s = g.sum(v[0]);
        Ok(g.mul(s, s)?)
    };
    out.push(("sum", check(&sum, &[a], STEP).unwrap()));
    out
}

pub fn linear_operator_and_poisson() -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    let sched = make_angle_schedule(ScheduleKind::UniformSparse, 3, 12, 0).unwrap();
    let r: Arc<dyn LinearMap<f64>> = Arc::new(SystemMatrix::new(6, &sched.angles));
    let lin = {
        let r = r.clone();
        move |g: &mut Graph<f64>, v: &[Var]| {
            let y = g.linear(v[0], r.clone())?;
            project(g, y, 111)
        }
    };
    out.push(("linear", check(&lin, &[random(&[6, 6], 21)], STEP).unwrap()));

    let counts: Vec<f64> = (0..10).map(|i| (i * 3 % 7) as f64).collect();
    let pois = move |g: &mut Graph<f64>, v: &[Var]| g.poisson_loglik(v[0], &counts, 1e-6);
    out.push((
        "poisson_loglik",
        check(&pois, &[positive(&[10], 22)], STEP).unwrap(),
    ));
    out
}

pub fn gaussian_helpers() -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    let kl = |g: &mut Graph<f64>, v: &[Var]| {
        let q = GaussianParams::new(g, v[0], v[1])?;
        kl_std_normal(g, &q)
    };
    out.push((
        "kl_std_normal",
        check(&kl, &[random(&[5], 23), random(&[5], 24)], STEP).unwrap(),
    ));
    let rep = |g: &mut Graph<f64>, v: &[Var]| {
        let q = GaussianParams::new(g, v[0], v[1])?;
        let z = reparameterize(g, &q, 77)?;
        project(g, z, 112)
    };
    out.push((
        "reparameterize",
        check(&rep, &[random(&[5], 25), random(&[5], 26)], STEP).unwrap(),
    ));
    out
}

fn toy_example() -> TrainingExample {
    let (o1, _) = make_toy_objects();
    let s = AngleSchedule::from_indices(ScheduleKind::Toy, 2, vec![0]).unwrap();
    let clean = radon_forward(&o1, &s).unwrap();
    let m = simulate_measurement(&clean, CountScale::new(1e4, 2.0).unwrap(), 3).unwrap();
    TrainingExample::from_measurement(&m, &RayCache::default()).unwrap()
}

pub fn small_unet_example() -> (ArchSpec, TrainingExample) {
    let mut arch = ArchSpec::unet(8);
    arch.depth = 2;
    arch.widths = vec![3, 4];
    arch.latent = 2;
    let mut img = ImageGrid::square(8);
    for (r, c) in [(2, 3), (3, 3), (4, 5), (5, 2)] {
        img.set(r, c, 1.0);
    }
    let sched = make_angle_schedule(ScheduleKind::UniformSparse, 4, 12, 0).unwrap();
    let clean = radon_forward(&img, &sched).unwrap();
    let m = simulate_measurement(&clean, CountScale::new(50.0, clean.max()).unwrap(), 5).unwrap();
    (
        arch,
        TrainingExample::from_measurement(&m, &RayCache::default()).unwrap(),
    )
}

/// Fresh models have zero biases, so conv outputs over zero padding sit exactly
/// on the leaky-ReLU kink. Random biases move the check to a smooth point.
pub fn generic_unet(arch: ArchSpec, seed: u64) -> PvaeModel<f64> {
    let mut model = PvaeModel::<f64>::new(arch, seed).unwrap();
    for (i, t) in model.params.tensors_mut().iter_mut().enumerate() {
        if t.shape.len() == 1 {
            let jitter = away_from_zero(&t.shape, 500 + i as u64);
            t.data
                .iter_mut()
                .zip(&jitter.data)
                .for_each(|(v, j)| *v += 0.1 * j);
        }
    }
    model
}

pub fn elbo_errors(model: &PvaeModel<f64>, ex: &TrainingExample, samples: usize) -> Vec<f64> {
    let f = |g: &mut Graph<f64>, v: &[Var]| -> Result<Var> {
        let net = Bound {
            model,
            vars: v.to_vec(),
        };
        Ok(elbo_loss(g, &net, ex, samples, 99)?.loss)
    };
    check(&f, model.params.tensors(), ELBO_STEP).unwrap()
}

pub fn frozen_noise_elbo_mlp() -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    let model = PvaeModel::<f64>::new(ArchSpec::mlp(2), 1).unwrap();
    let errs = elbo_errors(&model, &toy_example(), 2);
    out.push(("elbo/mlp", errs));
    out
}

pub fn frozen_noise_elbo_unet() -> Vec<(&'static str, Vec<f64>)> {
    let mut out = Vec::new();
    let (arch, ex) = small_unet_example();
    let model = generic_unet(arch, 2);
    let errs = elbo_errors(&model, &ex, 1);
    out.push(("elbo/unet", errs));
    out
}

/// Every case, in a fixed order.
pub fn all() -> Vec<(&'static str, Vec<f64>)> {
    let groups: [fn() -> Vec<(&'static str, Vec<f64>)>; 9] = [
        dense,
        conv2d,
        pooling_and_upsampling,
        elementwise_unary,
        binary_and_structural,
        linear_operator_and_poisson,
        gaussian_helpers,
        frozen_noise_elbo_mlp,
        frozen_noise_elbo_unet,
    ];
    groups.into_iter().flat_map(|g| g()).collect()
}

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use pvae_core::metrics::{write_csv, MetricsRecord};
use pvae_core::oracle::{
    exact_toy_posterior, marginal_histograms, posterior_histograms, tv_distance,
    write_posterior_csv, Bins,
};
use pvae_core::phantoms::{make_toy_objects, phantom_path, read_phantom, DatasetMeta};
use pvae_core::projector::{read_sinogram, ScheduleKind};
use pvae_core::pvae::{sample_posterior, Checkpoint, EncoderInput, PvaeModel};
use pvae_core::{rng, tensorio, ImageGrid};
use rayon::prelude::*;

use crate::config::{Config, Mode};
use crate::error::{CliError, Result};
use crate::layout::{code, tag, Layout};
use crate::manifest::RunManifest;
use crate::stages::{ensure_parent, fresh_dir, read_meta};

pub const METRICS: &str = "metrics.csv";
pub const TOY_ORACLE: &str = "toy_oracle.csv";
pub const TOY_HISTOGRAMS: &str = "toy_histograms.csv";
pub const TOY_POSTERIOR: &str = "oracle_posterior.csv";

/// Half-width of the window counted as "near" a pixel value.
pub const NEAR: f64 = 0.25;

pub fn algorithm_name(kind: ScheduleKind) -> String {
    format!("pvae_{}", tag(kind))
}

fn load_model(
    cfg: &Config,
    layout: &Layout,
    meta: &DatasetMeta,
    kind: ScheduleKind,
    trial: usize,
) -> Result<PvaeModel<f32>> {
    let dir = layout.checkpoint(kind, trial);
    if !dir.exists() {
        return Err(CliError::Data(format!(
            "no checkpoint at {}; run `train` first",
            dir.display()
        )));
    }
    let ck = Checkpoint::read(&dir)?;
    if ck.model.arch.image_size != meta.image_size {
        return Err(CliError::Data(format!(
            "checkpoint {} expects {1}x{1} objects, dataset holds {2}x{2}",
            dir.display(),
            ck.model.arch.image_size,
            meta.image_size
        )));
    }
    if ck.model.arch != cfg.arch() {
        return Err(CliError::Data(format!(
            "checkpoint {} was trained with a different architecture; run `train` again",
            dir.display()
        )));
    }
    Ok(ck.model)
}

pub fn run(cfg: &Config, layout: &Layout) -> Result<RunManifest> {
    let meta = read_meta(&layout.dataset())?;
    let dir = layout.evaluate();
    fresh_dir(&dir)?;
    let times = match cfg.mode {
        Mode::Toy => toy(cfg, layout, &meta, &dir)?,
        Mode::Foam => foam(cfg, layout, &meta, &dir)?,
    };
    RunManifest::write("evaluate", cfg, &dir, times)
}

/// Pixelwise mean and standard deviation of equally shaped samples.
fn moments(samples: &[ImageGrid]) -> Result<(ImageGrid, ImageGrid)> {
    let first = &samples[0];
    let n = samples.len() as f64;
    let mut mean = vec![0.0; first.len()];
    for s in samples {
        mean.iter_mut()
            .zip(s.values())
            .for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0; first.len()];
    for s in samples {
        var.iter_mut()
            .zip(s.values())
            .zip(&mean)
            .for_each(|((a, v), m)| *a += (v - m).powi(2) / n);
    }
    let std = var.into_iter().map(f64::sqrt).collect();
    Ok((
        ImageGrid::from_values(first.width(), first.height(), mean)?,
        ImageGrid::from_values(first.width(), first.height(), std)?,
    ))
}

fn foam(
    cfg: &Config,
    layout: &Layout,
    meta: &DatasetMeta,
    dir: &Path,
) -> Result<BTreeMap<String, f64>> {
    let hash = cfg.hash();
    let truths: Vec<ImageGrid> = (0..meta.object_count)
        .map(|i| read_phantom(&phantom_path(&layout.dataset(), i)))
        .collect::<pvae_core::Result<_>>()?;
    let mut records = Vec::new();
    let mut times = BTreeMap::new();
    for &kind in &cfg.schedules {
        let alg = algorithm_name(kind);
        for trial in 0..cfg.trials {
            let start = Instant::now();
            let model = load_model(cfg, layout, meta, kind, trial)?;
            let out: Vec<(MetricsRecord, ImageGrid, ImageGrid)> = truths
                .par_iter()
                .enumerate()
                .map(|(i, truth)| -> Result<_> {
                    let (m, _) = read_sinogram(&layout.measurement(kind, i))?;
                    let input = EncoderInput::from_measurement(&m)?;
                    let seed = rng::derive(cfg.seed, &[7, code(kind), trial as u64, i as u64]);
                    let samples = sample_posterior(&model, &input, cfg.point_samples, seed)?;
                    let (mean, std) = moments(&samples)?;
                    if mean.values().iter().any(|v| !v.is_finite()) {
                        return Err(CliError::Numerical(format!(
                            "{alg} trial {trial}: non-finite estimate for object {i}"
                        )));
                    }
                    let rec = MetricsRecord::score(i, &alg, trial, &mean, truth, &hash)?;
                    Ok((rec, mean, std))
                })
                .collect::<Result<_>>()?;
            for (i, (rec, mean, std)) in out.into_iter().enumerate() {
                let base = dir
                    .join("posterior")
                    .join(tag(kind))
                    .join(format!("trial_{trial}"));
                for (name, img) in [("mean", &mean), ("std", &std)] {
                    let p = base.join(format!("{name}_{i:04}.pvt"));
                    ensure_parent(&p)?;
                    tensorio::write_f64(&p, &[img.height(), img.width()], img.values())?;
                }
                records.push(rec);
            }
            times.insert(
                format!("{}/trial_{trial}", tag(kind)),
                start.elapsed().as_secs_f64(),
            );
        }
    }
    write_csv(&dir.join(METRICS), &records)?;
    Ok(times)
}

/// One pixel of one toy case, as written to the oracle comparison table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToyRow {
    pub trial: usize,
    pub case: String,
    pub object: usize,
    pub angle: usize,
    pub pixel: usize,
    pub truth: f64,
    pub tv: f64,
    pub mass_near_truth: f64,
    pub mass_near_zero: f64,
    pub mass_near_one: f64,
    pub oracle_p_o1: f64,
}

pub fn case_name(object: usize, angle: usize) -> String {
    format!("o{}_a{angle}", object + 1)
}

fn toy(
    cfg: &Config,
    layout: &Layout,
    meta: &DatasetMeta,
    dir: &Path,
) -> Result<BTreeMap<String, f64>> {
    let (o1, o2) = make_toy_objects();
    let objects = [o1, o2];
    let bins = Bins::default();
    let mut rows = Vec::new();
    let mut hist = csv::Writer::from_path(dir.join(TOY_HISTOGRAMS))?;
    hist.write_record(["trial", "case", "pixel", "bin_center", "model", "oracle"])?;
    let mut oracle_rows = Vec::new();
    let mut times = BTreeMap::new();
    for trial in 0..cfg.trials {
        let start = Instant::now();
        let model = load_model(cfg, layout, meta, ScheduleKind::Toy, trial)?;
        for (o, truth) in objects.iter().enumerate() {
            for a in 0..2 {
                let (m, _) = read_sinogram(&layout.toy_case(o, a))?;
                let post = exact_toy_posterior(&m, &objects, &[0.5, 0.5])?;
                let input = EncoderInput::from_measurement(&m)?;
                let seed = rng::derive(cfg.seed, &[8, trial as u64, (2 * o + a) as u64]);
                let samples = sample_posterior(&model, &input, cfg.posterior_samples, seed)?;
                let model_h = marginal_histograms(&samples, &bins)?;
                let oracle_h = posterior_histograms(&post, &bins);
                let n = samples.len() as f64;
                let frac = |p: usize, v: f64| {
                    samples
                        .iter()
                        .filter(|s| (s.values()[p] - v).abs() <= NEAR)
                        .count() as f64
                        / n
                };
                for p in 0..truth.len() {
                    rows.push(ToyRow {
                        trial,
                        case: case_name(o, a),
                        object: o,
                        angle: a,
                        pixel: p,
                        truth: truth.values()[p],
                        tv: tv_distance(&model_h[p], &oracle_h[p])?,
                        mass_near_truth: frac(p, truth.values()[p]),
                        mass_near_zero: frac(p, 0.0),
                        mass_near_one: frac(p, 1.0),
                        oracle_p_o1: post.probabilities[0],
                    });
                    for b in 0..bins.count {
                        hist.write_record([
                            trial.to_string(),
                            case_name(o, a),
                            p.to_string(),
                            format!("{:.2}", bins.center(b)),
                            model_h[p][b].to_string(),
                            oracle_h[p][b].to_string(),
                        ])?;
                    }
                }
                if trial == 0 {
                    oracle_rows.push((2 * o + a, post));
                }
            }
        }
        times.insert(format!("toy/trial_{trial}"), start.elapsed().as_secs_f64());
    }
    hist.flush()
        .map_err(|e| CliError::io(&dir.join(TOY_HISTOGRAMS), e))?;
    let mut w = csv::Writer::from_path(dir.join(TOY_ORACLE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()
        .map_err(|e| CliError::io(&dir.join(TOY_ORACLE), e))?;
    write_posterior_csv(&dir.join(TOY_POSTERIOR), &oracle_rows)?;
    Ok(times)
}

use std::collections::BTreeMap;
use std::time::Instant;

use pvae_core::classical::{reconstruct, Algorithm, ReconConfig};
use pvae_core::metrics::{write_csv, MetricsRecord};
use pvae_core::phantoms::{phantom_path, read_phantom};
use pvae_core::projector::{read_sinogram, ScheduleKind};
use pvae_core::tensorio;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, Mode};
use crate::error::{CliError, Result};
use crate::layout::{tag, Layout};
use crate::manifest::RunManifest;
use crate::stages::{ensure_parent, fresh_dir, read_meta};

/// One baseline: an algorithm applied to one measurement set.
#[derive(Debug, Clone, Serialize)]
pub struct Baseline {
    pub name: String,
    pub schedule: ScheduleKind,
    pub recon: ReconConfig,
}

pub fn baselines(cfg: &Config) -> Vec<Baseline> {
    let b = |alg: Algorithm, kind: ScheduleKind| {
        let prefix = match alg {
            Algorithm::Fbp => "fbp",
            Algorithm::Sirt => "sirt",
            Algorithm::Tv => "tv",
        };
        Baseline {
            name: format!("{prefix}_{}", tag(kind)),
            schedule: kind,
            recon: cfg.recon(alg),
        }
    };
    vec![
        b(Algorithm::Fbp, ScheduleKind::Full),
        b(Algorithm::Fbp, ScheduleKind::UniformSparse),
        b(Algorithm::Fbp, ScheduleKind::RandomSparse),
        b(Algorithm::Sirt, ScheduleKind::UniformSparse),
        b(Algorithm::Tv, ScheduleKind::UniformSparse),
    ]
}

pub const METRICS: &str = "metrics.csv";
pub const PARAMS: &str = "baselines.json";

pub fn run(cfg: &Config, layout: &Layout) -> Result<RunManifest> {
    if cfg.mode != Mode::Foam {
        return Err(CliError::Config(
            "mode: baselines run on foam datasets only".into(),
        ));
    }
    let meta = read_meta(&layout.dataset())?;
    let dir = layout.baselines();
    fresh_dir(&dir)?;
    let list = baselines(cfg);
    let hash = cfg.hash();

    // Per object: (records, images, seconds per baseline).
    type Row = (Vec<MetricsRecord>, Vec<pvae_core::ImageGrid>, Vec<f64>);
    let rows: Vec<Row> = (0..meta.object_count)
        .into_par_iter()
        .map(|i| -> Result<Row> {
            let truth = read_phantom(&phantom_path(&layout.dataset(), i))?;
            let mut recs = Vec::new();
            let mut imgs = Vec::new();
            let mut secs = Vec::new();
            for b in &list {
                let path = layout.measurement(b.schedule, i);
                let (sino, _) = read_sinogram(&path)?;
                let t = Instant::now();
                let img = reconstruct(&sino, &b.recon)?;
                secs.push(t.elapsed().as_secs_f64());
                recs.push(MetricsRecord::score(i, &b.name, 0, &img, &truth, &hash)?);
                imgs.push(img);
            }
            Ok((recs, imgs, secs))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut times: BTreeMap<String, f64> = BTreeMap::new();
    for (i, (recs, imgs, secs)) in rows.into_iter().enumerate() {
        for ((b, img), s) in list.iter().zip(&imgs).zip(secs) {
            let p = dir
                .join("recon")
                .join(&b.name)
                .join(format!("recon_{i:04}.pvt"));
            ensure_parent(&p)?;
            tensorio::write_f64(&p, &[img.height(), img.width()], img.values())?;
            *times.entry(format!("{}_total", b.name)).or_default() += s;
        }
        records.extend(recs);
    }
    let n = meta.object_count as f64;
    for b in &list {
        let total = times[&format!("{}_total", b.name)];
        times.insert(format!("{}_per_object", b.name), total / n);
    }
    write_csv(&dir.join(METRICS), &records)?;
    let params = dir.join(PARAMS);
    std::fs::write(&params, serde_json::to_string_pretty(&list)? + "\n")
        .map_err(|e| CliError::io(&params, e))?;
    RunManifest::write("baselines", cfg, &dir, times)
}

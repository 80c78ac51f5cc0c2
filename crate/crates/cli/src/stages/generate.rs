use std::collections::BTreeMap;
use std::time::Instant;

use pvae_core::phantoms::{
    generate_dataset, make_toy_objects, phantom_path, sample_toy_dataset, DatasetMeta, META_FILE,
};
use pvae_core::projector::{
    make_angle_schedule, radon_forward, simulate_measurement, write_sinogram, AngleSchedule,
    CountScale, ScheduleKind, Sinogram, RATE_FLOOR,
};
use pvae_core::{rng, tensorio, ImageGrid};
use rayon::prelude::*;

use crate::config::{Config, Mode};
use crate::error::{CliError, Result};
use crate::layout::{code, Layout};
use crate::manifest::RunManifest;
use crate::stages::{ensure_parent, fresh_dir};

/// Schedules written for every foam object, in this order.
pub const FOAM_SCHEDULES: [ScheduleKind; 3] = [
    ScheduleKind::Full,
    ScheduleKind::UniformSparse,
    ScheduleKind::RandomSparse,
];

pub fn schedule_for(cfg: &Config, kind: ScheduleKind, object: usize) -> Result<AngleSchedule> {
    let count = match kind {
        ScheduleKind::Full => cfg.source_angles,
        _ => cfg.sparse_angles,
    };
    let seed = rng::derive(cfg.seed, &[3, object as u64]);
    Ok(make_angle_schedule(kind, count, cfg.source_angles, seed)?)
}

fn noise_seed(cfg: &Config, kind: ScheduleKind, i: usize) -> u64 {
    rng::derive(cfg.seed, &[2, code(kind), i as u64])
}

fn write_pair(
    layout: &Layout,
    kind: ScheduleKind,
    i: usize,
    clean: &Sinogram,
    meas: &Sinogram,
    seed: u64,
) -> Result<()> {
    let np = layout.noiseless(kind, i);
    let mp = layout.measurement(kind, i);
    ensure_parent(&np)?;
    ensure_parent(&mp)?;
    write_sinogram(&np, clean, None)?;
    write_sinogram(&mp, meas, Some(seed))?;
    Ok(())
}

pub fn run(cfg: &Config, layout: &Layout) -> Result<RunManifest> {
    let start = Instant::now();
    let dir = layout.dataset();
    fresh_dir(&dir)?;
    match cfg.mode {
        Mode::Toy => toy(cfg, layout)?,
        Mode::Foam => foam(cfg, layout)?,
    }
    let times = BTreeMap::from([("generate".to_string(), start.elapsed().as_secs_f64())]);
    RunManifest::write("generate", cfg, &dir, times)
}

fn toy(cfg: &Config, layout: &Layout) -> Result<()> {
    let dir = layout.dataset();
    let (o1, o2) = make_toy_objects();
    let objects = [o1, o2];
    let both = make_angle_schedule(ScheduleKind::Full, 2, 2, 0)?;
    let normalizer = objects
        .iter()
        .map(|o| radon_forward(o, &both).map(|s| s.max()))
        .collect::<pvae_core::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let meta = DatasetMeta {
        object_count: cfg.object_count,
        measurements_per_object: 1,
        schedule_kind: ScheduleKind::Toy,
        source_angles: cfg.source_angles,
        image_size: cfg.image_size,
        photon_budget: cfg.photon_budget,
        normalizer: Some(normalizer),
        rate_floor: RATE_FLOOR,
        seed: cfg.seed,
    };
    let ds = sample_toy_dataset(&meta, rng::derive(cfg.seed, &[1]))?;
    meta.write(&dir.join(META_FILE))?;
    for (i, o) in ds.objects.iter().enumerate() {
        let p = phantom_path(&dir, i);
        ensure_parent(&p)?;
        tensorio::write_f64(&p, &[o.height(), o.width()], o.values())?;
    }
    let scale = CountScale::new(cfg.photon_budget, normalizer)?;

    let mut draws = csv::Writer::from_path(layout.toy_draws())?;
    draws.write_record(["draw", "object", "angle"])?;
    for (i, d) in ds.draws.iter().enumerate() {
        draws.write_record([i.to_string(), d.object.to_string(), d.angle.to_string()])?;
        let sched = AngleSchedule::from_indices(ScheduleKind::Toy, 2, vec![d.angle])?;
        let clean = radon_forward(&ds.objects[d.object], &sched)?;
        let seed = noise_seed(cfg, ScheduleKind::Toy, i);
        let meas = simulate_measurement(&clean, scale, seed)?;
        write_pair(layout, ScheduleKind::Toy, i, &clean, &meas, seed)?;
    }
    draws
        .flush()
        .map_err(|e| CliError::io(&layout.toy_draws(), e))?;

    // Held-out measurements for each (object, angle) pair.
    for (o, obj) in ds.objects.iter().enumerate() {
        for a in 0..2 {
            let sched = AngleSchedule::from_indices(ScheduleKind::Toy, 2, vec![a])?;
            let clean = radon_forward(obj, &sched)?;
            let seed = rng::derive(cfg.seed, &[4, (2 * o + a) as u64]);
            let meas = simulate_measurement(&clean, scale, seed)?;
            let p = layout.toy_case(o, a);
            ensure_parent(&p)?;
            write_sinogram(&p, &meas, Some(seed))?;
        }
    }
    Ok(())
}

fn foam(cfg: &Config, layout: &Layout) -> Result<()> {
    let dir = layout.dataset();
    // The full and random-sparse sets ride alongside the primary uniform one.
    let mut meta = DatasetMeta {
        object_count: cfg.object_count,
        measurements_per_object: FOAM_SCHEDULES.len(),
        schedule_kind: ScheduleKind::UniformSparse,
        source_angles: cfg.source_angles,
        image_size: cfg.image_size,
        photon_budget: cfg.photon_budget,
        normalizer: None,
        rate_floor: RATE_FLOOR,
        seed: cfg.seed,
    };
    meta.validate()?;
    let phantoms = generate_dataset(&cfg.foam_spec(rng::derive(cfg.seed, &[1])), &meta, &dir)?;

    let full_schedule = schedule_for(cfg, ScheduleKind::Full, 0)?;
    let full: Vec<Sinogram> = phantoms
        .par_iter()
        .map(|p| radon_forward(p, &full_schedule))
        .collect::<pvae_core::Result<_>>()?;
    let normalizer = full.iter().map(Sinogram::max).fold(0.0, f64::max);
    if !(normalizer > 0.0) {
        return Err(CliError::Data("every phantom projects to zero".into()));
    }
    meta.normalizer = Some(normalizer);
    meta.write(&dir.join(META_FILE))?;
    let scale = CountScale::new(cfg.photon_budget, normalizer)?;

    let sets: Vec<Vec<(Sinogram, Sinogram, u64)>> = phantoms
        .par_iter()
        .zip(&full)
        .enumerate()
        .map(|(i, (p, f)): (usize, (&ImageGrid, &Sinogram))| {
            FOAM_SCHEDULES
                .iter()
                .map(|&kind| {
                    let clean = match kind {
                        ScheduleKind::Full => f.clone(),
                        _ => radon_forward(p, &schedule_for(cfg, kind, i)?)?,
                    };
                    let seed = noise_seed(cfg, kind, i);
                    let meas = simulate_measurement(&clean, scale, seed)?;
                    Ok((clean, meas, seed))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    for (i, set) in sets.iter().enumerate() {
        for (&kind, (clean, meas, seed)) in FOAM_SCHEDULES.iter().zip(set) {
            write_pair(layout, kind, i, clean, meas, *seed)?;
        }
    }
    Ok(())
}

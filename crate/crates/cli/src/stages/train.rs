use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use pvae_core::phantoms::DatasetMeta;
use pvae_core::projector::{read_sinogram, RayCache, ScheduleKind};
use pvae_core::pvae::{Checkpoint, EpochLog, PvaeModel, Trainer, TrainingExample};
use pvae_core::rng;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::layout::{code, tag, Layout};
use crate::manifest::RunManifest;
use crate::stages::read_meta;

pub const LOG: &str = "log.csv";

/// Measurements of one schedule. Only the measurement files are opened, so
/// training never sees ground truth.
pub fn load_measurements(
    layout: &Layout,
    meta: &DatasetMeta,
    kind: ScheduleKind,
) -> Result<Vec<TrainingExample>> {
    let cache = RayCache::default();
    (0..meta.object_count)
        .map(|i| {
            let path = layout.measurement(kind, i);
            if !path.exists() {
                return Err(CliError::Data(format!(
                    "missing measurement {}",
                    path.display()
                )));
            }
            let (m, _) = read_sinogram(&path)?;
            Ok(TrainingExample::from_measurement(&m, &cache)?)
        })
        .collect()
}

pub fn model_seed(cfg: &Config, kind: ScheduleKind, trial: usize) -> u64 {
    rng::derive(cfg.seed, &[5, code(kind), trial as u64])
}

fn write_log(path: &std::path::Path, trace: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss", "kl", "loglik"])?;
    for r in trace {
        w.write_record([
            r.epoch.to_string(),
            r.loss.to_string(),
            r.kl.to_string(),
            r.loglik.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn run(cfg: &Config, layout: &Layout) -> Result<RunManifest> {
    let meta = read_meta(&layout.dataset())?;
    if meta.image_size != cfg.image_size {
        return Err(CliError::Data(format!(
            "dataset holds {0}x{0} objects, config asks for {1}x{1}",
            meta.image_size, cfg.image_size
        )));
    }
    let hash = cfg.hash();
    let mut times = BTreeMap::new();
    for &kind in &cfg.schedules {
        let set = load_measurements(layout, &meta, kind)?;
        for trial in 0..cfg.trials {
            let start = Instant::now();
            let run_dir = layout.train_run(kind, trial);
            let ck_dir = layout.checkpoint(kind, trial);
            let tcfg = cfg.train_config(rng::derive(cfg.seed, &[6, code(kind), trial as u64]));
            let resumable = ck_dir.exists()
                && Checkpoint::read(&ck_dir).is_ok_and(|ck| ck.manifest.config_hash == hash);
            let mut trainer = if resumable {
                Trainer::resume(Checkpoint::read(&ck_dir)?, tcfg)?
            } else {
                if run_dir.exists() {
                    fs::remove_dir_all(&run_dir).map_err(|e| CliError::io(&run_dir, e))?;
                }
                let seed = model_seed(cfg, kind, trial);
                let mut t = Trainer::new(PvaeModel::new(cfg.arch(), seed)?, tcfg, seed)?;
                t.config_hash = hash.clone();
                t
            };
            fs::create_dir_all(&run_dir).map_err(|e| CliError::io(&run_dir, e))?;
            let every = (cfg.epochs / 10).max(1);
            let label = format!("{}/trial_{trial}", tag(kind));
            trainer.run(&set, Some(&ck_dir), |r| {
                if r.epoch % every == 0 || r.epoch == cfg.epochs {
                    println!(
                        "train {label} epoch {}/{} loss {:.4} kl {:.4}",
                        r.epoch, cfg.epochs, r.loss, r.kl
                    );
                }
            })?;
            if !ck_dir.exists() {
                trainer.checkpoint().write(&ck_dir)?;
            }
            write_log(&run_dir.join(LOG), &trainer.state.trace)?;
            times.insert(label, start.elapsed().as_secs_f64());
        }
    }
    RunManifest::write("train", cfg, &layout.train(), times)
}

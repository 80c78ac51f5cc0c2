//! Experiment harness for the sparse-view CT benchmark: dataset generation,
//! classical baselines, autoencoder training, evaluation and reporting.
//!
//! Every stage works inside one run directory (see [`layout::Layout`]) and
//! leaves a [`manifest::RunManifest`] next to its outputs.

pub mod config;
pub mod error;
pub mod layout;
pub mod manifest;
pub mod stages;
pub mod svg;

use std::path::Path;

use config::Config;
use error::Result;
use layout::Layout;
use manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Baselines,
    Train,
    Evaluate,
    Report,
}

pub fn run_stage(stage: Stage, cfg: &Config, out: &Path) -> Result<RunManifest> {
    let layout = Layout::new(out);
    match stage {
        Stage::Generate => stages::generate::run(cfg, &layout),
        Stage::Baselines => stages::baselines::run(cfg, &layout),
        Stage::Train => stages::train::run(cfg, &layout),
        Stage::Evaluate => stages::evaluate::run(cfg, &layout),
        Stage::Report => stages::report::run(cfg, &layout),
    }
}

//! The five pipeline stages. Each reads the run directory, writes its own
//! subdirectory and finishes with a manifest.

pub mod baselines;
pub mod evaluate;
pub mod generate;
pub mod report;
pub mod train;

use std::fs;
use std::path::Path;

use pvae_core::phantoms::DatasetMeta;
use pvae_core::phantoms::META_FILE;

use crate::error::{CliError, Result};

/// Removes and recreates a stage directory so its inventory is exactly what
/// this run wrote.
pub(crate) fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) => fs::create_dir_all(p).map_err(|e| CliError::io(p, e)),
        None => Ok(()),
    }
}

pub(crate) fn read_meta(dataset: &Path) -> Result<DatasetMeta> {
    let path = dataset.join(META_FILE);
    if !path.exists() {
        return Err(CliError::Data(format!(
            "{} not found; run `generate` first",
            path.display()
        )));
    }
    Ok(DatasetMeta::read(&path)?)
}

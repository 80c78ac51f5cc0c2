//! Per-stage run manifest: config snapshot, seeds, timings and a hashed
//! inventory of every file the stage left on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::layout::MANIFEST;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the stage directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: Config,
    /// Seconds per named step. Volatile: excluded from `inventory_hash`.
    pub wall_times: BTreeMap<String, f64>,
    pub inventory: Vec<FileEntry>,
    /// Digest of the inventory listing; equal runs give equal digests.
    pub inventory_hash: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Every regular file under `dir` except the manifest itself, sorted by path.
pub fn inventory(dir: &Path) -> Result<Vec<FileEntry>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Data(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walk stays under its root");
        if rel == Path::new(MANIFEST) {
            continue;
        }
        let path = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let meta = entry
            .metadata()
            .map_err(|e| CliError::Data(e.to_string()))?;
        out.push(FileEntry {
            path,
            bytes: meta.len(),
            sha256: sha256_file(entry.path())?,
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

pub fn inventory_hash(entries: &[FileEntry]) -> String {
    let mut h = Sha256::new();
    for e in entries {
        h.update(format!("{}\t{}\t{}\n", e.path, e.bytes, e.sha256));
    }
    hex::encode(h.finalize())
}

impl RunManifest {
    /// Scans `dir` and writes `dir/manifest.json` through a temporary file.
    pub fn write(
        stage: &str,
        cfg: &Config,
        dir: &Path,
        wall_times: BTreeMap<String, f64>,
    ) -> Result<RunManifest> {
        let inventory = inventory(dir)?;
        let m = RunManifest {
            stage: stage.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            wall_times,
            inventory_hash: inventory_hash(&inventory),
            inventory,
        };
        let path = dir.join(MANIFEST);
        let tmp = dir.join(format!("{MANIFEST}.tmp"));
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
        Ok(m)
    }

    pub fn read(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// True when the inventory matches the files currently under `dir`.
    pub fn matches_disk(&self, dir: &Path) -> Result<bool> {
        Ok(inventory(dir)? == self.inventory)
    }
}

//! Paths inside a run directory. Each stage owns one subdirectory.

use std::path::{Path, PathBuf};

use pvae_core::projector::ScheduleKind;

pub const MANIFEST: &str = "manifest.json";

pub fn tag(kind: ScheduleKind) -> &'static str {
    match kind {
        ScheduleKind::Full => "full",
        ScheduleKind::UniformSparse => "uniform",
        ScheduleKind::RandomSparse => "random",
        ScheduleKind::Toy => "toy",
    }
}

/// Stable code mixed into derived seeds.
pub fn code(kind: ScheduleKind) -> u64 {
    match kind {
        ScheduleKind::Full => 0,
        ScheduleKind::UniformSparse => 1,
        ScheduleKind::RandomSparse => 2,
        ScheduleKind::Toy => 3,
    }
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout {
            root: root.to_path_buf(),
        }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn measurement(&self, kind: ScheduleKind, i: usize) -> PathBuf {
        self.dataset()
            .join("measurements")
            .join(tag(kind))
            .join(format!("meas_{i:04}.pvt"))
    }

    pub fn noiseless(&self, kind: ScheduleKind, i: usize) -> PathBuf {
        self.dataset()
            .join("noiseless")
            .join(tag(kind))
            .join(format!("sino_{i:04}.pvt"))
    }

    /// Held-out toy measurement of object `object` at source angle `angle`.
    pub fn toy_case(&self, object: usize, angle: usize) -> PathBuf {
        self.dataset()
            .join("cases")
            .join(format!("case_o{}_a{angle}.pvt", object + 1))
    }

    pub fn toy_draws(&self) -> PathBuf {
        self.dataset().join("draws.csv")
    }

    pub fn baselines(&self) -> PathBuf {
        self.root.join("baselines")
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("train")
    }

    pub fn train_run(&self, kind: ScheduleKind, trial: usize) -> PathBuf {
        self.train().join(tag(kind)).join(format!("trial_{trial}"))
    }

    pub fn checkpoint(&self, kind: ScheduleKind, trial: usize) -> PathBuf {
        self.train_run(kind, trial).join("checkpoint")
    }

    pub fn evaluate(&self) -> PathBuf {
        self.root.join("evaluate")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Full,
    UniformSparse,
    RandomSparse,
    /// Single draw from `{0, π/2}`; the source grid has two angles.
    Toy,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Full => "full",
            ScheduleKind::UniformSparse => "uniform-sparse",
            ScheduleKind::RandomSparse => "random-sparse",
            ScheduleKind::Toy => "toy",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ScheduleKind::Full),
            "uniform-sparse" | "uniform" => Ok(ScheduleKind::UniformSparse),
            "random-sparse" | "random" => Ok(ScheduleKind::RandomSparse),
            "toy" => Ok(ScheduleKind::Toy),
            other => Err(Error::Config(format!(
                "unknown angle schedule kind {other:?}"
            ))),
        }
    }
}

/// Projection angles drawn from an equally spaced source grid over `[0, π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSchedule {
    pub kind: ScheduleKind,
    pub source_count: usize,
    /// Positions in the source grid, strictly increasing.
    pub indices: Vec<usize>,
    pub angles: Vec<f64>,
}

impl AngleSchedule {
    /// Schedule from explicit source-grid indices.
    pub fn from_indices(
        kind: ScheduleKind,
        source_count: usize,
        indices: Vec<usize>,
    ) -> Result<Self> {
        if source_count == 0 {
            return Err(Error::Config("angle source count must be ≥ 1".into()));
        }
        if indices.is_empty() {
            return Err(Error::Config(
                "angle schedule needs at least one angle".into(),
            ));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "angle indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= source_count {
                return Err(Error::Config(format!(
                    "angle index {last} outside a {source_count}-angle source grid"
                )));
            }
        }
        let angles = indices
            .iter()
            .map(|&i| i as f64 * PI / source_count as f64)
            .collect();
        Ok(AngleSchedule {
            kind,
            source_count,
            indices,
            angles,
        })
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Builds a schedule of `count` angles out of a `source` grid.
///
/// `seed` is only consumed by the random kinds.
pub fn make_angle_schedule(
    kind: ScheduleKind,
    count: usize,
    source: usize,
    seed: u64,
) -> Result<AngleSchedule> {
    if count == 0 {
        return Err(Error::Config("angle count must be ≥ 1".into()));
    }
    if count > source {
        return Err(Error::Config(format!(
            "cannot take {count} angles from a {source}-angle source grid"
        )));
    }
    match kind {
        ScheduleKind::Full => {
            if count != source {
                return Err(Error::Config(
                    "a full schedule uses every source angle".into(),
                ));
            }
            AngleSchedule::from_indices(kind, source, (0..source).collect())
        }
        ScheduleKind::UniformSparse => {
            let idx = (0..count).map(|i| i * source / count).collect();
            AngleSchedule::from_indices(kind, source, idx)
        }
        ScheduleKind::RandomSparse | ScheduleKind::Toy => {
            if kind == ScheduleKind::Toy && (source != 2 || count != 1) {
                return Err(Error::Config(
                    "toy schedules take one angle from the two-angle grid {0, π/2}".into(),
                ));
            }
            let mut r = rng::rng(seed);
            let mut idx = index::sample(&mut r, source, count).into_vec();
            idx.sort_unstable();
            AngleSchedule::from_indices(kind, source, idx)
        }
    }
}

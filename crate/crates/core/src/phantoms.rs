//! Toy two-object dataset and synthetic foam phantoms.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::projector::ScheduleKind;
use crate::rng;
use crate::tensorio;

/// The canonical toy pair: `O1` fills the left column, `O2` the right one.
/// Their row sums (the π/2 projection) coincide; their column sums do not.
pub fn make_toy_objects() -> (ImageGrid, ImageGrid) {
    let o1 = ImageGrid::from_rows(&[&[1.0, 0.0], &[1.0, 0.0]]).unwrap();
    let o2 = ImageGrid::from_rows(&[&[0.0, 1.0], &[0.0, 1.0]]).unwrap();
    (o1, o2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub object_count: usize,
    pub measurements_per_object: usize,
    pub schedule_kind: ScheduleKind,
    pub source_angles: usize,
    pub image_size: usize,
    pub photon_budget: f64,
    /// Largest noiseless sinogram value over the dataset, once known.
    pub normalizer: Option<f64>,
    pub rate_floor: f64,
    pub seed: u64,
}

impl DatasetMeta {
    pub fn validate(&self) -> Result<()> {
        if self.object_count == 0 {
            return Err(Error::Config("object_count must be ≥ 1".into()));
        }
        if self.measurements_per_object == 0 {
            return Err(Error::Config("measurements_per_object must be ≥ 1".into()));
        }
        if !(self.photon_budget > 0.0) {
            return Err(Error::Config("photon_budget must be > 0".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyDraw {
    pub object: usize,
    /// Index into the toy source grid: 0 → angle 0, 1 → angle π/2.
    pub angle: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub objects: [ImageGrid; 2],
    pub prior: [f64; 2],
    pub draws: Vec<ToyDraw>,
}

/// Samples `meta.object_count` (object, angle) pairs with a uniform prior and
/// uniform angle choice.
pub fn sample_toy_dataset(meta: &DatasetMeta, seed: u64) -> Result<ToyDataset> {
    meta.validate()?;
    if meta.measurements_per_object != 1 {
        return Err(Error::Config(format!(
            "toy datasets take exactly one measurement per object, got {}",
            meta.measurements_per_object
        )));
    }
    if meta.schedule_kind != ScheduleKind::Toy {
        return Err(Error::Config(
            "toy dataset requires the toy angle schedule".into(),
        ));
    }
    let prior = [0.5, 0.5];
    let mut r = rng::rng(seed);
    let draws = (0..meta.object_count)
        .map(|_| ToyDraw {
            object: usize::from(r.random::<f64>() >= prior[0]),
            angle: r.random_range(0..2),
        })
        .collect();
    let (o1, o2) = make_toy_objects();
    Ok(ToyDataset {
        objects: [o1, o2],
        prior,
        draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoamSpec {
    pub size: usize,
    /// Material disk radius as a fraction of the half-width.
    pub disk_radius: f64,
    pub void_count: (usize, usize),
    /// Void radii bounds as fractions of the half-width.
    pub void_radius: (f64, f64),
    pub void_fraction: f64,
    pub seed: u64,
}

impl Default for FoamSpec {
    fn default() -> Self {
        FoamSpec {
            size: 64,
            disk_radius: 0.85,
            void_count: (8, 400),
            void_radius: (0.05, 0.2),
            void_fraction: 0.3,
            seed: 1,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 20_000;
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Circle {
    x: f64,
    y: f64,
    r: f64,
}

impl FoamSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("foam spec: {m}")));
        if self.size < 4 {
            return bad("size must be ≥ 4");
        }
        if !(self.disk_radius > 0.0 && self.disk_radius <= 1.0) {
            return bad("disk_radius must lie in (0, 1]");
        }
        if self.void_count.0 > self.void_count.1 {
            return bad("void_count range is empty");
        }
        let (lo, hi) = self.void_radius;
        if !(lo > 0.0 && lo <= hi && hi < self.disk_radius) {
            return bad("void_radius must satisfy 0 < min ≤ max < disk_radius");
        }
        if !(0.0..1.0).contains(&self.void_fraction) {
            return bad("void_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    fn with_seed(&self, seed: u64) -> FoamSpec {
        FoamSpec {
            seed,
            ..self.clone()
        }
    }
}

/// Rasterizes a unit-valued disk with circular voids.
fn rasterize(n: usize, disk: f64, voids: &[Circle]) -> ImageGrid {
    let mut img = ImageGrid::square(n);
    let sub = SUPERSAMPLE as f64;
    for row in 0..n {
        for col in 0..n {
            let (cx, cy) = img.pixel_center(row, col);
            let mut inside = 0usize;
            for a in 0..SUPERSAMPLE {
                for b in 0..SUPERSAMPLE {
                    let x = cx - 0.5 + (a as f64 + 0.5) / sub;
                    let y = cy - 0.5 + (b as f64 + 0.5) / sub;
                    if x * x + y * y > disk * disk {
                        continue;
                    }
                    let in_void = voids
                        .iter()
                        .any(|v| (x - v.x).powi(2) + (y - v.y).powi(2) < v.r * v.r);
                    if !in_void {
                        inside += 1;
                    }
                }
            }
            img.set(row, col, inside as f64 / (sub * sub));
        }
    }
    img
}

/// Draws one foam phantom: a material disk of value 1 with empty voids.
pub fn make_foam_phantom(spec: &FoamSpec) -> Result<ImageGrid> {
    spec.validate()?;
    let half = spec.size as f64 / 2.0;
    let disk = spec.disk_radius * half;
    let mut r = rng::rng(spec.seed);

    let target_area = spec.void_fraction * std::f64::consts::PI * disk * disk;
    let (rmin, rmax) = (spec.void_radius.0 * half, spec.void_radius.1 * half);
    let mut radii = Vec::new();
    if spec.void_fraction > 0.0 {
        let mut area = 0.0;
        while (area < target_area || radii.len() < spec.void_count.0)
            && radii.len() < spec.void_count.1
        {
            let rad = (r.random_range(rmin.ln()..=rmax.ln())).exp();
            let a = std::f64::consts::PI * rad * rad;
            if area + a > target_area && radii.len() >= spec.void_count.0 {
                // Trim the last void so the analytic void area hits the target.
                let rest = ((target_area - area) / std::f64::consts::PI).sqrt();
                if rest >= rmin {
                    radii.push(rest);
                }
                break;
            }
            area += a;
            radii.push(rad);
        }
        radii.sort_by(|a, b| b.partial_cmp(a).unwrap());
    }

    let gap = 0.5;
    let mut voids: Vec<Circle> = Vec::with_capacity(radii.len());
    let mut attempts = 0usize;
    for &rad in &radii {
        let reach = disk - rad - gap;
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            attempts += 1;
            let x = r.random_range(-reach..=reach);
            let y = r.random_range(-reach..=reach);
            if x * x + y * y > reach * reach {
                continue;
            }
            let clear = voids
                .iter()
                .all(|v| (x - v.x).powi(2) + (y - v.y).powi(2) > (v.r + rad + gap).powi(2));
            if clear {
                voids.push(Circle { x, y, r: rad });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Placement {
                attempts,
                placed: voids.len(),
            });
        }
    }
    Ok(rasterize(spec.size, disk, &voids))
}

/// Fraction of the material disk left empty in a rasterized phantom.
pub fn void_fraction(spec: &FoamSpec, phantom: &ImageGrid) -> f64 {
    let disk = rasterize(spec.size, spec.disk_radius * spec.size as f64 / 2.0, &[]);
    1.0 - phantom.sum() / disk.sum()
}

/// Per-phantom seed derived from the master seed.
pub fn phantom_seed(master: u64, index: usize) -> u64 {
    master ^ index as u64
}

pub fn phantom_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("phantoms").join(format!("phantom_{index:04}.pvt"))
}

pub const META_FILE: &str = "meta.json";

/// Writes `meta.object_count` foam phantoms plus the meta sidecar under
/// `out_dir`. On failure every file this call created is removed.
pub fn generate_dataset(
    spec: &FoamSpec,
    meta: &DatasetMeta,
    out_dir: &Path,
) -> Result<Vec<ImageGrid>> {
    spec.validate()?;
    let phantoms = (0..meta.object_count)
        .into_par_iter()
        .map(|i| make_foam_phantom(&spec.with_seed(phantom_seed(spec.seed, i))))
        .collect::<Result<Vec<_>>>()?;

    let pdir = out_dir.join("phantoms");
    fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    let mut written = Vec::new();
    let result = (|| {
        for (i, p) in phantoms.iter().enumerate() {
            let path = phantom_path(out_dir, i);
            tensorio::write_f64(&path, &[p.height(), p.width()], p.values())?;
            written.push(path);
        }
        let path = out_dir.join(META_FILE);
        meta.write(&path)?;
        written.push(path);
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        return Err(e);
    }
    Ok(phantoms)
}

pub fn read_phantom(path: &Path) -> Result<ImageGrid> {
    let t = tensorio::read_tensor(path)?;
    if t.shape.len() != 2 {
        return Err(Error::Container {
            path: path.to_path_buf(),
            reason: format!("expected a 2-D image, got shape {:?}", t.shape),
        });
    }
    ImageGrid::from_values(t.shape[1], t.shape[0], t.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_meta(m: usize) -> DatasetMeta {
        DatasetMeta {
            object_count: m,
            measurements_per_object: 1,
            schedule_kind: ScheduleKind::Toy,
            source_angles: 2,
            image_size: 2,
            photon_budget: 1e4,
            normalizer: None,
            rate_floor: 1e-6,
            seed: 7,
        }
    }

    #[test]
    fn toy_objects_sums() {
        let (o1, o2) = make_toy_objects();
        let col = |o: &ImageGrid, c| o.get(0, c) + o.get(1, c);
        let row = |o: &ImageGrid, r| o.get(r, 0) + o.get(r, 1);
        assert_eq!([col(&o1, 0), col(&o1, 1)], [2.0, 0.0]);
        assert_eq!([col(&o2, 0), col(&o2, 1)], [0.0, 2.0]);
        assert_eq!([row(&o1, 0), row(&o1, 1)], [1.0, 1.0]);
        assert_eq!([row(&o2, 0), row(&o2, 1)], [1.0, 1.0]);
        assert_ne!(o1, o2);
    }

    #[test]
    fn toy_sampling_is_reproducible() {
        let a = sample_toy_dataset(&toy_meta(1024), 7).unwrap();
        let b = sample_toy_dataset(&toy_meta(1024), 7).unwrap();
        assert_eq!(a.draws.len(), 1024);
        assert_eq!(a.draws, b.draws);
        let one = sample_toy_dataset(&toy_meta(1), 3).unwrap();
        assert_eq!(one.draws.len(), 1);
        assert!(one.draws[0].object < 2);
    }

    #[test]
    fn toy_cells_are_balanced() {
        let m = 10_000;
        let d = sample_toy_dataset(&toy_meta(m), 99).unwrap();
        let mut cells = [[0usize; 2]; 2];
        for draw in &d.draws {
            cells[draw.object][draw.angle] += 1;
        }
        let sigma = (m as f64 * 0.25 * 0.75).sqrt();
        for row in cells {
            for c in row {
                assert!((c as f64 - m as f64 / 4.0).abs() < 3.0 * sigma, "{cells:?}");
            }
        }
    }

    #[test]
    fn toy_rejects_multiple_measurements() {
        let mut meta = toy_meta(4);
        meta.measurements_per_object = 2;
        assert!(sample_toy_dataset(&meta, 0).is_err());
    }

    #[test]
    fn foam_basic_properties() {
        let spec = FoamSpec {
            size: 128,
            seed: 1,
            ..FoamSpec::default()
        };
        let p = make_foam_phantom(&spec).unwrap();
        assert_eq!((p.width(), p.height()), (128, 128));
        assert!(p.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(p, make_foam_phantom(&spec).unwrap());
        let f = void_fraction(&spec, &p);
        assert!((f - 0.3).abs() <= 0.2 * 0.3, "void fraction {f}");
    }

    #[test]
    fn zero_void_fraction_is_solid_disk() {
        let spec = FoamSpec {
            void_fraction: 0.0,
            ..FoamSpec::default()
        };
        let p = make_foam_phantom(&spec).unwrap();
        assert!(void_fraction(&spec, &p).abs() < 1e-12);
        assert_eq!(p.get(32, 32), 1.0);
        assert_eq!(p.get(0, 0), 0.0);
    }

    #[test]
    fn impossible_packing_reports_attempts() {
        let spec = FoamSpec {
            void_count: (50, 50),
            void_radius: (0.3, 0.3),
            void_fraction: 0.1,
            ..FoamSpec::default()
        };
        match make_foam_phantom(&spec) {
            Err(Error::Placement { attempts, .. }) => assert!(attempts >= PLACEMENT_ATTEMPTS),
            other => panic!("expected placement failure, got {other:?}"),
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = FoamSpec {
            void_radius: (0.5, 0.1),
            ..FoamSpec::default()
        };
        assert!(matches!(make_foam_phantom(&spec), Err(Error::Config(_))));
    }
}

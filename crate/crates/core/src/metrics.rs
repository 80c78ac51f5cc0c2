//! Image-quality metrics and multi-trial aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(op: &'static str, a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::shape(
            op,
            format!(
                "{}x{} vs {}x{}",
                a.width(),
                a.height(),
                b.width(),
                b.height()
            ),
        ));
    }
    Ok(())
}

pub fn mse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    same_shape("mse", a, b)?;
    let s: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    Ok(s / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB; `+∞` for identical images.
pub fn psnr(a: &ImageGrid, b: &ImageGrid, data_range: f64) -> Result<f64> {
    if !(data_range > 0.0) {
        return Err(Error::Data(format!(
            "PSNR data range must be > 0, got {data_range}"
        )));
    }
    let e = mse(a, b)?;
    Ok(psnr_from_mse(e, data_range))
}

pub fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (data_range * data_range / mse).log10()
    }
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with a 1-D kernel along both axes.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let kw = k.len();
    let (ow, oh) = (w - kw + 1, h - kw + 1);
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * img[r * w + c + i])
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean structural similarity over every full 11×11 Gaussian window
/// (σ = 1.5, K1 = 0.01, K2 = 0.03).
pub fn ssim(a: &ImageGrid, b: &ImageGrid, data_range: f64) -> Result<f64> {
    same_shape("ssim", a, b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::shape(
            "ssim",
            format!(
                "image {}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
                a.width(),
                a.height()
            ),
        ));
    }
    if !(data_range > 0.0) {
        return Err(Error::Data(format!(
            "SSIM data range must be > 0, got {data_range}"
        )));
    }
    let (w, h) = (a.width(), a.height());
    let k = gaussian_window();
    let (av, bv) = (a.values(), b.values());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
    };
    let mu_a = filter_valid(av, w, h, &k);
    let mu_b = filter_valid(bv, w, h, &k);
    let aa = filter_valid(&prod(&|x, _| x * x), w, h, &k);
    let bb = filter_valid(&prod(&|_, y| y * y), w, h, &k);
    let ab = filter_valid(&prod(&|x, y| x * y), w, h, &k);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

/// Phantom-anchored data range `max − min`, falling back to 1 for flat images.
pub fn data_range(truth: &ImageGrid) -> f64 {
    let r = truth.max() - truth.min();
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub object_id: usize,
    pub algorithm: String,
    pub trial: usize,
    pub ssim: f64,
    pub psnr_db: f64,
    pub mse: f64,
    pub config_hash: String,
}

impl MetricsRecord {
    /// Scores `recon` against `truth` with the phantom's own data range.
    pub fn score(
        object_id: usize,
        algorithm: &str,
        trial: usize,
        recon: &ImageGrid,
        truth: &ImageGrid,
        config_hash: &str,
    ) -> Result<Self> {
        let range = data_range(truth);
        let e = mse(recon, truth)?;
        Ok(MetricsRecord {
            object_id,
            algorithm: algorithm.to_string(),
            trial,
            ssim: ssim(recon, truth, range)?,
            psnr_db: psnr_from_mse(e, range),
            mse: e,
            config_hash: config_hash.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot summarize an empty group".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Summary {
            mean,
            std,
            count: values.len(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub algorithm: String,
    pub ssim: Summary,
    pub psnr_db: Summary,
    pub mse: Summary,
}

fn group(records: &[MetricsRecord]) -> BTreeMap<&str, Vec<&MetricsRecord>> {
    let mut groups: BTreeMap<&str, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.algorithm).or_default().push(r);
    }
    groups
}

/// Per-algorithm mean, sample standard deviation and count of each metric,
/// ordered by algorithm tag.
pub fn aggregate_trials(records: &[MetricsRecord]) -> Result<Vec<Aggregate>> {
    if records.is_empty() {
        return Err(Error::Data("no metrics records to aggregate".into()));
    }
    group(records)
        .into_iter()
        .map(|(alg, rs)| {
            let col = |f: fn(&MetricsRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            Ok(Aggregate {
                algorithm: alg.to_string(),
                ssim: Summary::of(&col(|r| r.ssim))?,
                psnr_db: Summary::of(&col(|r| r.psnr_db))?,
                mse: Summary::of(&col(|r| r.mse))?,
            })
        })
        .collect()
}

/// Collapses object-level records to one dataset-mean record per
/// `(algorithm, trial)`; `object_id` of the result is the object count.
pub fn dataset_means(records: &[MetricsRecord]) -> Vec<MetricsRecord> {
    let mut groups: BTreeMap<(&str, usize), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.algorithm, r.trial)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((alg, trial), rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&MetricsRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            MetricsRecord {
                object_id: rs.len(),
                algorithm: alg.to_string(),
                trial,
                ssim: mean(|r| r.ssim),
                psnr_db: mean(|r| r.psnr_db),
                mse: mean(|r| r.mse),
                config_hash: rs[0].config_hash.clone(),
            }
        })
        .collect()
}

pub fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Data(format!("{}: {e}", path.display()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(n: usize, seed: u64) -> ImageGrid {
        let mut r = rng::rng(seed);
        ImageGrid::from_values(n, n, (0..n * n).map(|_| r.random::<f64>()).collect()).unwrap()
    }

    fn record(alg: &str, trial: usize, ssim: f64) -> MetricsRecord {
        MetricsRecord {
            object_id: 0,
            algorithm: alg.into(),
            trial,
            ssim,
            psnr_db: 20.0,
            mse: 0.01,
            config_hash: "h".into(),
        }
    }

    #[test]
    fn mse_values() {
        let z = ImageGrid::square(2);
        let o = z.map(|_| 1.0);
        assert_eq!(mse(&z, &o).unwrap(), 1.0);
        assert_eq!(mse(&o, &o).unwrap(), 0.0);
        assert!(mse(&z, &ImageGrid::square(3)).is_err());
    }

    #[test]
    fn psnr_values() {
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(0.005, 1.0) - psnr_from_mse(0.01, 1.0) - 3.0103).abs() < 1e-4);
        let a = random(4, 1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &a, 0.0).is_err());
    }

    #[test]
    fn ssim_identity_and_shift() {
        let a = random(32, 2);
        assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let b = a.map(|v| v + 0.5);
        let s1 = ssim(&a, &b, 1.0).unwrap();
        let s2 = ssim(&b, &a, 1.0).unwrap();
        assert!(s1 > 0.0 && s1 < 1.0, "{s1}");
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_independent_noise_is_low() {
        let s = ssim(&random(64, 3), &random(64, 4), 1.0).unwrap();
        assert!(s < 0.2, "{s}");
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = ImageGrid::square(2);
        assert!(matches!(
            ssim(&a, &a, 1.0),
            Err(Error::Shape { op: "ssim", .. })
        ));
    }

    #[test]
    fn aggregate_examples() {
        let one = aggregate_trials(&[record("fbp", 0, 0.7)]).unwrap();
        assert_eq!(one[0].ssim.mean, 0.7);
        assert_eq!(one[0].ssim.std, 0.0);
        let two = aggregate_trials(&[record("fbp", 0, 0.4), record("fbp", 1, 0.6)]).unwrap();
        assert!((two[0].ssim.mean - 0.5).abs() < 1e-15);
        assert!((two[0].ssim.std - 0.1414).abs() < 1e-4);
        assert_eq!(two[0].ssim.count, 2);
        assert!(aggregate_trials(&[]).is_err());
    }

    #[test]
    fn dataset_means_per_trial() {
        let rs = vec![
            record("a", 0, 0.2),
            record("a", 0, 0.4),
            record("a", 1, 0.9),
            record("b", 0, 0.1),
        ];
        let m = dataset_means(&rs);
        assert_eq!(m.len(), 3);
        assert!((m[0].ssim - 0.3).abs() < 1e-15);
        assert_eq!(m[0].object_id, 2);
    }

    #[test]
    fn csv_roundtrip_with_infinite_psnr() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut r = record("fbp_full", 2, 0.8);
        r.psnr_db = f64::INFINITY;
        write_csv(&path, &[r.clone()]).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("object_id,algorithm,trial,ssim,psnr_db,mse,config_hash\n"));
        assert_eq!(read_csv(&path).unwrap(), vec![r]);
    }

    proptest! {
        #[test]
        fn mse_psnr_invariant_under_shared_permutation(seed in 0u64..1000, perm_seed in 0u64..1000) {
            let (a, b) = (random(12, seed), random(12, seed + 1));
            let mut idx: Vec<usize> = (0..144).collect();
            let mut r = rng::rng(perm_seed);
            for i in (1..idx.len()).rev() {
                idx.swap(i, r.random_range(0..=i));
            }
            let pa = ImageGrid::from_values(12, 12, idx.iter().map(|&i| a.values()[i]).collect()).unwrap();
            let pb = ImageGrid::from_values(12, 12, idx.iter().map(|&i| b.values()[i]).collect()).unwrap();
            let (m1, m2) = (mse(&a, &b).unwrap(), mse(&pa, &pb).unwrap());
            prop_assert!((m1 - m2).abs() <= 1e-12 * m1.max(1.0));
            prop_assert!((psnr(&a, &b, 1.0).unwrap() - psnr(&pa, &pb, 1.0).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn ssim_self_is_one(seed in 0u64..1000, scale in 0.1f64..10.0) {
            let a = random(16, seed).map(|v| v * scale);
            prop_assert!((ssim(&a, &a, scale).unwrap() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn aggregate_mean_within_range(vals in proptest::collection::vec(0.0f64..1.0, 1..20)) {
            let rs: Vec<_> = vals.iter().enumerate().map(|(i, &v)| record("x", i, v)).collect();
            let agg = aggregate_trials(&rs).unwrap();
            let s = agg[0].ssim;
            prop_assert!(s.mean >= s.min - 1e-12 && s.mean <= s.max + 1e-12);
            let mut rev = rs.clone();
            rev.reverse();
            let agg2 = aggregate_trials(&rev).unwrap();
            prop_assert!((agg2[0].ssim.mean - s.mean).abs() < 1e-12);
        }
    }
}

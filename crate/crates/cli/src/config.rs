//! Flat JSON run configuration. Every key has a per-mode default; a config
//! file and `--set key=value` overrides replace individual keys.

use std::fs;
use std::path::Path;

use pvae_core::classical::{Filter, ReconConfig};
use pvae_core::diffgraph::AdamConfig;
use pvae_core::phantoms::FoamSpec;
use pvae_core::projector::ScheduleKind;
use pvae_core::pvae::{ArchSpec, Architecture, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Toy,
    Foam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mode: Mode,
    /// Master seed; every other seed derives from it.
    pub seed: u64,

    // dataset
    pub object_count: usize,
    pub image_size: usize,
    /// Size of the equally spaced source grid over [0, π).
    pub source_angles: usize,
    /// Angles kept by the sparse schedules.
    pub sparse_angles: usize,
    /// Expected counts at the brightest bin of the dataset.
    pub photon_budget: f64,
    pub disk_radius: f64,
    pub void_count_min: usize,
    pub void_count_max: usize,
    pub void_radius_min: f64,
    pub void_radius_max: f64,
    pub void_fraction: f64,

    // baselines
    pub fbp_filter: Filter,
    pub sirt_iterations: usize,
    pub sirt_relaxation: f64,
    pub tv_lambda: f64,
    pub tv_iterations: usize,

    // model
    pub architecture: Architecture,
    pub depth: usize,
    pub widths: Vec<usize>,
    pub latent: usize,
    pub decoder_logvar_init: f64,

    // training
    /// Measurement sets to train on, one model per set and trial.
    pub schedules: Vec<ScheduleKind>,
    pub trials: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Monte Carlo draws per ELBO evaluation.
    pub mc_samples: usize,
    pub lr: f64,
    pub lr_final: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub checkpoint_every: usize,

    // evaluation
    /// Posterior draws averaged into a point estimate.
    pub point_samples: usize,
    /// Posterior draws per toy case for the marginal histograms.
    pub posterior_samples: usize,
}

impl Config {
    pub fn preset(mode: Mode) -> Self {
        let foam = FoamSpec::default();
        let base = Config {
            mode,
            seed: 1,
            object_count: 100,
            image_size: 64,
            source_angles: 180,
            sparse_angles: 20,
            photon_budget: 1e4,
            disk_radius: foam.disk_radius,
            void_count_min: foam.void_count.0,
            void_count_max: foam.void_count.1,
            void_radius_min: foam.void_radius.0,
            void_radius_max: foam.void_radius.1,
            void_fraction: foam.void_fraction,
            fbp_filter: Filter::Ramp,
            sirt_iterations: 200,
            sirt_relaxation: 1.0,
            tv_lambda: 1.0,
            tv_iterations: 300,
            architecture: Architecture::Unet,
            depth: 3,
            widths: vec![16, 32, 64],
            latent: 4,
            decoder_logvar_init: -4.0,
            schedules: vec![ScheduleKind::UniformSparse, ScheduleKind::RandomSparse],
            trials: 3,
            epochs: 100,
            batch_size: 8,
            mc_samples: 1,
            lr: 2e-3,
            lr_final: Some(2e-4),
            beta1: 0.9,
            beta2: 0.999,
            checkpoint_every: 10,
            point_samples: 64,
            posterior_samples: 20_000,
        };
        match mode {
            Mode::Foam => base,
            Mode::Toy => Config {
                seed: 7,
                object_count: 1024,
                image_size: 2,
                source_angles: 2,
                sparse_angles: 1,
                architecture: Architecture::Mlp,
                depth: 2,
                widths: vec![64, 64],
                latent: 2,
                schedules: vec![ScheduleKind::Toy],
                trials: 1,
                epochs: 10_000,
                batch_size: 64,
                lr: 1e-3,
                lr_final: Some(1e-5),
                checkpoint_every: 1000,
                ..base
            },
        }
    }

    /// Reads `path` (if any), applies `overrides` in order, then `seed`.
    /// The mode is read first so the remaining defaults follow it.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut user = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => {
                        return Err(CliError::Config(format!(
                            "{}: expected a JSON object",
                            p.display()
                        )))
                    }
                    Err(e) => return Err(CliError::Config(format!("{}: {e}", p.display()))),
                }
            }
            None => Map::new(),
        };
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| {
                CliError::Config(format!("--set expects key=value, got {item:?}"))
            })?;
            let value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            user.insert(key.trim().to_string(), value);
        }
        if let Some(s) = seed {
            user.insert("seed".into(), Value::from(s));
        }

        let mode: Mode = match user.get("mode") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|_| CliError::Config(format!("mode: unknown value {v}")))?,
            None => Mode::Foam,
        };
        let Value::Object(mut merged) = serde_json::to_value(Config::preset(mode))? else {
            unreachable!("Config serializes to an object")
        };
        for (k, v) in user {
            if !merged.contains_key(&k) {
                return Err(CliError::Config(format!("unknown key {k:?}")));
            }
            merged.insert(k, v);
        }
        // Probe key by key against the preset so a bad value is reported by name.
        let preset = serde_json::to_value(Config::preset(mode))?;
        for (k, v) in &merged {
            let mut probe = preset.clone();
            probe[k] = v.clone();
            if let Err(e) = serde_json::from_value::<Config>(probe) {
                return Err(CliError::Config(format!("{k}: {e}")));
            }
        }
        let cfg: Config = serde_json::from_value(Value::Object(merged))
            .map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(CliError::Config(format!("{key}: {why}")));
        if self.object_count == 0 {
            return bad("object_count", "must be ≥ 1");
        }
        if self.photon_budget <= 0.0 || !self.photon_budget.is_finite() {
            return bad("photon_budget", "must be > 0");
        }
        if self.trials == 0 {
            return bad("trials", "must be ≥ 1");
        }
        if self.schedules.is_empty() {
            return bad("schedules", "must list at least one schedule");
        }
        if self.point_samples == 0 || self.posterior_samples == 0 {
            return bad("point_samples", "sample counts must be ≥ 1");
        }
        match self.mode {
            Mode::Toy => {
                if self.image_size != 2 || self.source_angles != 2 {
                    return bad(
                        "image_size",
                        "toy mode uses 2×2 objects and a two-angle source grid",
                    );
                }
                if self.schedules != [ScheduleKind::Toy] {
                    return bad("schedules", "toy mode trains on the \"toy\" schedule only");
                }
            }
            Mode::Foam => {
                if self.sparse_angles == 0 || self.sparse_angles > self.source_angles {
                    return bad("sparse_angles", "must lie in [1, source_angles]");
                }
                if self
                    .schedules
                    .iter()
                    .any(|k| matches!(k, ScheduleKind::Toy))
                {
                    return bad("schedules", "the toy schedule needs toy mode");
                }
                self.foam_spec(0).validate()?;
            }
        }
        self.recon(pvae_core::classical::Algorithm::Sirt)
            .validate()?;
        self.arch().validate()?;
        self.train_config(0).validate()?;
        Ok(())
    }

    pub fn foam_spec(&self, seed: u64) -> FoamSpec {
        FoamSpec {
            size: self.image_size,
            disk_radius: self.disk_radius,
            void_count: (self.void_count_min, self.void_count_max),
            void_radius: (self.void_radius_min, self.void_radius_max),
            void_fraction: self.void_fraction,
            seed,
        }
    }

    pub fn recon(&self, algorithm: pvae_core::classical::Algorithm) -> ReconConfig {
        use pvae_core::classical::Algorithm;
        match algorithm {
            Algorithm::Fbp => ReconConfig::fbp(self.fbp_filter),
            Algorithm::Sirt => ReconConfig {
                relaxation: self.sirt_relaxation,
                ..ReconConfig::sirt(self.sirt_iterations)
            },
            Algorithm::Tv => ReconConfig {
                iterations: self.tv_iterations,
                ..ReconConfig::tv(self.tv_lambda)
            },
        }
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            architecture: self.architecture,
            image_size: self.image_size,
            depth: self.depth,
            widths: self.widths.clone(),
            latent: self.latent,
            decoder_logvar_init: self.decoder_logvar_init,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            samples: self.mc_samples,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                ..AdamConfig::default()
            },
            lr_final: self.lr_final,
            checkpoint_every: self.checkpoint_every,
            seed,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("Config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn presets_validate() {
        Config::preset(Mode::Toy).validate().unwrap();
        Config::preset(Mode::Foam).validate().unwrap();
    }

    #[test]
    fn overrides_follow_the_mode() {
        let cfg = Config::load(None, &set(&["mode=toy", "epochs=5"]), Some(3)).unwrap();
        assert_eq!(cfg.mode, Mode::Toy);
        assert_eq!(cfg.object_count, 1024);
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn string_and_list_values() {
        let cfg = Config::load(
            None,
            &set(&["fbp_filter=hann", r#"schedules=["uniform-sparse"]"#]),
            None,
        )
        .unwrap();
        assert_eq!(cfg.fbp_filter, Filter::Hann);
        assert_eq!(cfg.schedules, vec![ScheduleKind::UniformSparse]);
    }

    #[test]
    fn errors_name_the_key() {
        let err = Config::load(None, &set(&["epochs=-1"]), None).unwrap_err();
        assert!(
            matches!(&err, CliError::Config(m) if m.starts_with("epochs")),
            "{err}"
        );
        let err = Config::load(None, &set(&["nonsense=1"]), None).unwrap_err();
        assert!(err.to_string().contains("nonsense"));
        let err = Config::load(None, &set(&["mode=toy", "image_size=4"]), None).unwrap_err();
        assert!(err.to_string().contains("image_size"));
        assert!(Config::load(None, &set(&["novalue"]), None).is_err());
    }

    #[test]
    fn config_file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"mode": "foam", "object_count": 10, "tv_lambda": 0.5}"#,
        )
        .unwrap();
        let cfg = Config::load(Some(&path), &set(&["object_count=12"]), None).unwrap();
        assert_eq!((cfg.object_count, cfg.tv_lambda), (12, 0.5));
        fs::write(&path, "[1]").unwrap();
        assert!(matches!(
            Config::load(Some(&path), &[], None),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::preset(Mode::Foam);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.tv_lambda = 2.0;
        assert_ne!(a.hash(), b.hash());
    }
}

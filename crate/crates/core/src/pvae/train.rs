use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffgraph::{
    adam_step, AdamConfig, AdamState, Graph, ParamSpec, ParamStore, StepOutcome, Tensor,
};
use crate::error::{Error, Result};
use crate::pvae::{elbo_loss, ArchSpec, PvaeModel, TrainingExample};
use crate::rng;
use crate::tensorio::{read_tensor, write_tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Monte Carlo draws per ELBO evaluation.
    pub samples: usize,
    pub adam: AdamConfig,
    /// Learning rate reached at the last epoch by geometric decay; `None`
    /// keeps it constant.
    #[serde(default)]
    pub lr_final: Option<f64>,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            samples: 1,
            adam: AdamConfig::default(),
            lr_final: None,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.samples == 0 {
            return Err(Error::Config("batch_size and samples must be ≥ 1".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be > 0",
                self.adam.lr
            )));
        }
        if let Some(f) = self.lr_final {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Config(format!("lr_final {f} must be > 0")));
            }
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_final {
            Some(f) if self.epochs > 1 => {
                let t = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
                self.adam.lr * (f / self.adam.lr).powf(t)
            }
            _ => self.adam.lr,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean negative ELBO over the epoch's examples.
    pub loss: f64,
    pub kl: f64,
    pub loglik: f64,
    /// Not persisted in checkpoints, which stay byte-reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Epochs completed.
    pub epoch: usize,
    pub trace: Vec<EpochLog>,
    pub adam: AdamState<f32>,
    /// Optimizer steps dropped for non-finite gradients.
    pub skipped_steps: u64,
}

/// Provenance stored with a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub epoch: usize,
    pub adam_step: u64,
    pub model_seed: u64,
    pub config: TrainConfig,
    pub config_hash: String,
    pub trace: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArchFile {
    arch: ArchSpec,
    params: Vec<ParamSpec>,
}

/// Parameters, optimizer moments and provenance; enough to resume bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: PvaeModel<f32>,
    pub adam: AdamState<f32>,
    pub manifest: TrainManifest,
}

pub const ARCH_FILE: &str = "architecture.json";
/// Directory holding one container per named parameter.
pub const PARAMS_DIR: &str = "params";
const MOMENT1_FILE: &str = "adam_m.pvt";
const MOMENT2_FILE: &str = "adam_v.pvt";
pub const MANIFEST_FILE: &str = "training.json";

fn flat(ts: &[Tensor<f32>]) -> Vec<f32> {
    ts.iter().flat_map(|t| t.data.iter().copied()).collect()
}

impl Checkpoint {
    /// Writes into `dir`, replacing any previous checkpoint there only once
    /// the new one is complete.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let tmp = sibling(dir, "tmp");
        let old = sibling(dir, "old");
        for d in [&tmp, &old] {
            if d.exists() {
                fs::remove_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let specs = self.model.params.specs();
        let arch = ArchFile {
            arch: self.model.arch.clone(),
            params: specs,
        };
        write_json(&tmp.join(ARCH_FILE), &arch)?;
        let total = self.model.params.numel();
        let pdir = tmp.join(PARAMS_DIR);
        fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
        for (name, t) in self
            .model
            .params
            .names()
            .iter()
            .zip(self.model.params.tensors())
        {
            write_tensor(&pdir.join(format!("{name}.pvt")), &t.shape, &t.data)?;
        }
        write_tensor(&tmp.join(MOMENT1_FILE), &[total], &flat(&self.adam.m))?;
        write_tensor(&tmp.join(MOMENT2_FILE), &[total], &flat(&self.adam.v))?;
        write_json(&tmp.join(MANIFEST_FILE), &self.manifest)?;
        if dir.exists() {
            fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
        }
        fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
        if old.exists() {
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let arch: ArchFile = read_json(&dir.join(ARCH_FILE))?;
        arch.arch.validate()?;
        let load = |name: &str| -> Result<ParamStore<f32>> {
            let t = read_tensor(&dir.join(name))?;
            ParamStore::unflatten(&arch.params, &t.data)
        };
        let mut params = ParamStore::new();
        for spec in &arch.params {
            let path = dir.join(PARAMS_DIR).join(format!("{}.pvt", spec.name));
            let t = read_tensor(&path)?;
            if t.shape != spec.shape {
                return Err(Error::Container {
                    path,
                    reason: format!("shape {:?}, architecture says {:?}", t.shape, spec.shape),
                });
            }
            params.add(spec.name.clone(), Tensor::new(t.shape, t.data));
        }
        let m = load(MOMENT1_FILE)?;
        let v = load(MOMENT2_FILE)?;
        let manifest: TrainManifest = read_json(&dir.join(MANIFEST_FILE))?;
        let mut model = PvaeModel::<f32>::new(arch.arch, 0)?;
        model.params.load_from(params)?;
        Ok(Checkpoint {
            model,
            adam: AdamState {
                step: manifest.adam_step,
                m: m.tensors().to_vec(),
                v: v.tensors().to_vec(),
            },
            manifest,
        })
    }
}

fn sibling(dir: &Path, suffix: &str) -> PathBuf {
    let mut name = dir.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".{suffix}"));
    dir.with_file_name(name)
}

fn write_json<S: Serialize>(path: &Path, v: &S) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

struct ExampleResult {
    loss: f64,
    kl: f64,
    loglik: f64,
    grads: Vec<Vec<f32>>,
}

/// Single-writer Adam loop over the negative ELBO.
pub struct Trainer {
    pub model: PvaeModel<f32>,
    pub state: TrainState,
    pub config: TrainConfig,
    pub model_seed: u64,
    pub config_hash: String,
}

impl Trainer {
    pub fn new(model: PvaeModel<f32>, config: TrainConfig, model_seed: u64) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&model.params);
        Ok(Trainer {
            model,
            state: TrainState {
                epoch: 0,
                trace: Vec::new(),
                adam,
                skipped_steps: 0,
            },
            config,
            model_seed,
            config_hash: String::new(),
        })
    }

    /// Continues from `ck`; `config.epochs` is the new total.
    pub fn resume(ck: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            model: ck.model,
            state: TrainState {
                epoch: ck.manifest.epoch,
                trace: ck.manifest.trace,
                adam: ck.adam,
                skipped_steps: 0,
            },
            config,
            model_seed: ck.manifest.model_seed,
            config_hash: ck.manifest.config_hash,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            adam: self.state.adam.clone(),
            manifest: TrainManifest {
                epoch: self.state.epoch,
                adam_step: self.state.adam.step,
                model_seed: self.model_seed,
                config: self.config.clone(),
                config_hash: self.config_hash.clone(),
                trace: self.state.trace.clone(),
            },
        }
    }

    fn example(&self, ex: &TrainingExample, seed: u64) -> Result<ExampleResult> {
        let mut g = Graph::new();
        let net = self.model.bind(&mut g);
        let terms = elbo_loss(&mut g, &net, ex, self.config.samples, seed)?;
        let kl = g.value(terms.kl).item() as f64;
        let latent: usize = self
            .model
            .arch
            .latent_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum();
        if kl < -1e-4 * latent as f64 {
            return Err(Error::Numerical(format!("KL term {kl} is negative")));
        }
        let mut grads = g.backward(terms.loss)?;
        Ok(ExampleResult {
            loss: g.value(terms.loss).item() as f64,
            kl,
            loglik: g.value(terms.loglik).item() as f64,
            grads: net
                .vars
                .iter()
                .zip(self.model.params.tensors())
                .map(|(&v, t)| grads.take_or_zero(v, t.numel()))
                .collect(),
        })
    }

    /// One pass over `set` in a seeded random order.
    pub fn run_epoch(&mut self, set: &[TrainingExample]) -> Result<EpochLog> {
        if set.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let start = Instant::now();
        let epoch = self.state.epoch as u64;
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut rng::rng(rng::derive(self.config.seed, &[epoch])));
        let (mut loss, mut kl, mut loglik) = (0.0, 0.0, 0.0);
        let adam = AdamConfig {
            lr: self.config.lr_at(self.state.epoch),
            ..self.config.adam
        };
        for batch in order.chunks(self.config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| self.example(&set[i], rng::derive(self.config.seed, &[epoch, i as u64])))
                .collect::<Result<Vec<_>>>()?;
            let mut sum: Vec<Vec<f32>> = self
                .model
                .params
                .tensors()
                .iter()
                .map(|t| vec![0.0; t.numel()])
                .collect();
            for r in &results {
                loss += r.loss;
                kl += r.kl;
                loglik += r.loglik;
                for (acc, g) in sum.iter_mut().zip(&r.grads) {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f32;
            sum.iter_mut().flatten().for_each(|v| *v *= inv);
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "epoch {epoch}: loss became {loss}"
                )));
            }
            if adam_step(&mut self.model.params, &sum, &mut self.state.adam, &adam)?
                == StepOutcome::SkippedNonFinite
            {
                self.state.skipped_steps += 1;
            }
        }
        let m = set.len() as f64;
        self.state.epoch += 1;
        let row = EpochLog {
            epoch: self.state.epoch,
            loss: loss / m,
            kl: kl / m,
            loglik: loglik / m,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        self.state.trace.push(row.clone());
        Ok(row)
    }

    /// Trains up to `config.epochs`, checkpointing into `dir` when given.
    /// A non-finite loss stops training and leaves the last checkpoint.
    pub fn run(
        &mut self,
        set: &[TrainingExample],
        dir: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<()> {
        while self.state.epoch < self.config.epochs {
            let row = self.run_epoch(set)?;
            on_epoch(&row);
            let every = self.config.checkpoint_every;
            if let Some(d) = dir {
                if (every > 0 && self.state.epoch % every == 0)
                    || self.state.epoch == self.config.epochs
                {
                    self.checkpoint().write(d)?;
                }
            }
        }
        Ok(())
    }
}

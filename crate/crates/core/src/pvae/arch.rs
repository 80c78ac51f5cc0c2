use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffgraph::{GaussianParams, Graph, ParamStore, Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::pvae::EncoderInput;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Mlp,
    Unet,
}

/// Architecture descriptor, stored next to every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub architecture: Architecture,
    pub image_size: usize,
    /// Resolution levels of the U-Net; ignored by the MLP.
    pub depth: usize,
    /// Hidden widths (MLP) or channels per resolution level (U-Net).
    pub widths: Vec<usize>,
    /// Latent size (MLP) or latent channels per skip level (U-Net).
    pub latent: usize,
    /// Initial bias of the decoder's log-variance output.
    pub decoder_logvar_init: f64,
}

impl ArchSpec {
    pub fn mlp(image_size: usize) -> Self {
        ArchSpec {
            architecture: Architecture::Mlp,
            image_size,
            depth: 0,
            widths: vec![64, 64],
            latent: 8,
            decoder_logvar_init: -4.0,
        }
    }

    pub fn unet(image_size: usize) -> Self {
        ArchSpec {
            architecture: Architecture::Unet,
            image_size,
            depth: 3,
            widths: vec![16, 32, 64],
            latent: 4,
            decoder_logvar_init: -4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.latent == 0 || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("architecture sizes must be positive".into()));
        }
        match self.architecture {
            Architecture::Mlp => {
                if self.image_size > 8 {
                    return Err(Error::Config(format!(
                        "mlp architecture supports images up to 8x8, got {0}x{0}",
                        self.image_size
                    )));
                }
                if self.widths.is_empty() {
                    return Err(Error::Config("mlp needs at least one hidden layer".into()));
                }
            }
            Architecture::Unet => {
                if self.depth == 0 || self.widths.len() != self.depth {
                    return Err(Error::Config(format!(
                        "unet of depth {} needs {} widths, got {}",
                        self.depth,
                        self.depth,
                        self.widths.len()
                    )));
                }
                if self.image_size % (1 << self.depth) != 0 {
                    return Err(Error::Config(format!(
                        "unet of depth {} needs an image side divisible by {}, got {}",
                        self.depth,
                        1 << self.depth,
                        self.image_size
                    )));
                }
            }
        }
        Ok(())
    }

    /// Shape of each latent level: one for the MLP, `depth + 1` for the
    /// U-Net (full resolution first, bottleneck last).
    pub fn latent_shapes(&self) -> Vec<Vec<usize>> {
        match self.architecture {
            Architecture::Mlp => vec![vec![self.latent]],
            Architecture::Unet => (0..=self.depth)
                .map(|l| {
                    let s = self.image_size >> l;
                    vec![self.latent, s, s]
                })
                .collect(),
        }
    }

    pub fn pixels(&self) -> usize {
        self.image_size * self.image_size
    }
}

/// Architecture plus its trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PvaeModel<T> {
    pub arch: ArchSpec,
    pub params: ParamStore<T>,
}

struct Init {
    rng: rng::Rng,
}

impl Init {
    fn weight<T: Scalar>(&mut self, shape: &[usize], fan_in: usize, gain: f64) -> Tensor<T> {
        let sd = gain * (2.0 / fan_in as f64).sqrt();
        let d = Normal::new(0.0, sd).unwrap();
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| T::of(d.sample(&mut self.rng))).collect(),
        )
    }
}

impl<T: Scalar> PvaeModel<T> {
    /// Fresh model with He-normal weights and zero biases.
    pub fn new(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut init = Init {
            rng: rng::rng(seed),
        };
        let mut p = ParamStore::new();
        let dense = |p: &mut ParamStore<T>,
                     init: &mut Init,
                     name: &str,
                     inp: usize,
                     out: usize,
                     gain: f64| {
            p.add(format!("{name}.w"), init.weight(&[out, inp], inp, gain));
            p.add(format!("{name}.b"), Tensor::zeros(&[out]));
        };
        let conv = |p: &mut ParamStore<T>,
                    init: &mut Init,
                    name: &str,
                    inp: usize,
                    out: usize,
                    gain: f64| {
            p.add(
                format!("{name}.w"),
                init.weight(&[out, inp, 3, 3], inp * 9, gain),
            );
            p.add(format!("{name}.b"), Tensor::zeros(&[out]));
        };
        let px = arch.pixels();
        match arch.architecture {
            Architecture::Mlp => {
                let mut inp = 2 * px;
                for (i, &w) in arch.widths.iter().enumerate() {
                    dense(&mut p, &mut init, &format!("enc{i}"), inp, w, 1.0);
                    inp = w;
                }
                dense(&mut p, &mut init, "enc_head", inp, 2 * arch.latent, 0.1);
                let mut inp = arch.latent;
                for (i, &w) in arch.widths.iter().enumerate() {
                    dense(&mut p, &mut init, &format!("dec{i}"), inp, w, 1.0);
                    inp = w;
                }
                dense(&mut p, &mut init, "dec_head", inp, 2 * px, 0.1);
            }
            Architecture::Unet => {
                let (w, c) = (&arch.widths, arch.latent);
                let mut inp = 2;
                for (l, &wl) in w.iter().enumerate() {
                    conv(&mut p, &mut init, &format!("enc{l}a"), inp, wl, 1.0);
                    conv(&mut p, &mut init, &format!("enc{l}b"), wl, wl, 1.0);
                    conv(&mut p, &mut init, &format!("lat{l}"), wl, 2 * c, 0.1);
                    inp = wl;
                }
                let deep = w[arch.depth - 1];
                conv(&mut p, &mut init, "enc_bottom", deep, deep, 1.0);
                conv(
                    &mut p,
                    &mut init,
                    &format!("lat{}", arch.depth),
                    deep,
                    2 * c,
                    0.1,
                );
                conv(&mut p, &mut init, "dec_bottom", c, deep, 1.0);
                let mut inp = deep;
                for l in (0..arch.depth).rev() {
                    conv(&mut p, &mut init, &format!("dec{l}a"), inp + c, w[l], 1.0);
                    conv(&mut p, &mut init, &format!("dec{l}b"), w[l], w[l], 1.0);
                    inp = w[l];
                }
                conv(&mut p, &mut init, "dec_head", inp, 2, 0.1);
            }
        }
        let head = p.slot("dec_head.b").expect("decoder head registered");
        let hb = &mut p.tensors_mut()[head].data;
        let split = hb.len() / 2;
        hb[split..]
            .iter_mut()
            .for_each(|v| *v = T::of(arch.decoder_logvar_init));
        Ok(PvaeModel { arch, params: p })
    }

    pub fn cast<U: Scalar>(&self) -> PvaeModel<U> {
        PvaeModel {
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    /// Adds the parameters to `g` as trainable leaves.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound<'_, T> {
        Bound {
            model: self,
            vars: self.params.bind(g),
        }
    }

    /// Like [`Self::bind`] but as constants, for inference.
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound<'_, T> {
        Bound {
            model: self,
            vars: self
                .params
                .tensors()
                .iter()
                .map(|t| g.input(t.clone()))
                .collect(),
        }
    }
}

/// Decoder output: per-pixel Gaussian over the object.
#[derive(Debug, Clone, Copy)]
pub struct ObjectDistribution {
    /// `[n, n]`, nonnegative.
    pub mean: Var,
    /// `[n, n]`, clamped.
    pub logvar: Var,
}

/// A model whose parameters live on a graph.
pub struct Bound<'a, T> {
    pub model: &'a PvaeModel<T>,
    pub vars: Vec<Var>,
}

impl<T: Scalar> Bound<'_, T> {
    fn var(&self, name: &str) -> Var {
        let slot = self
            .model
            .params
            .slot(name)
            .unwrap_or_else(|| panic!("parameter {name} missing from the store"));
        self.vars[slot]
    }

    fn dense(&self, g: &mut Graph<T>, name: &str, x: Var) -> Result<Var> {
        g.dense(
            x,
            self.var(&format!("{name}.w")),
            self.var(&format!("{name}.b")),
        )
    }

    fn conv(&self, g: &mut Graph<T>, name: &str, x: Var) -> Result<Var> {
        g.conv2d(
            x,
            self.var(&format!("{name}.w")),
            self.var(&format!("{name}.b")),
        )
    }

    fn split_gaussian(&self, g: &mut Graph<T>, head: Var, c: usize) -> Result<GaussianParams> {
        let mean = g.slice(head, 0, c)?;
        let lv = g.slice(head, c, c)?;
        GaussianParams::new(g, mean, lv)
    }

    /// Approximate posterior over every latent level.
    pub fn encode(&self, g: &mut Graph<T>, input: &EncoderInput) -> Result<Vec<GaussianParams>> {
        let arch = &self.model.arch;
        if input.size != arch.image_size {
            return Err(Error::shape(
                "encode",
                format!(
                    "input is {0}x{0}, model expects {1}x{1}",
                    input.size, arch.image_size
                ),
            ));
        }
        let n = arch.image_size;
        let mut data: Vec<T> = input.recon.iter().map(|&v| T::of(v)).collect();
        data.extend(input.coverage.iter().map(|&v| T::of(v)));
        match arch.architecture {
            Architecture::Mlp => {
                let mut h = g.input(Tensor::new(vec![2 * n * n], data));
                for i in 0..arch.widths.len() {
                    h = self.dense(g, &format!("enc{i}"), h)?;
                    h = g.leaky_relu(h);
                }
                let head = self.dense(g, "enc_head", h)?;
                Ok(vec![self.split_gaussian(g, head, arch.latent)?])
            }
            Architecture::Unet => {
                let mut h = g.input(Tensor::new(vec![2, n, n], data));
                let mut levels = Vec::with_capacity(arch.depth + 1);
                for l in 0..arch.depth {
                    h = self.conv(g, &format!("enc{l}a"), h)?;
                    h = g.leaky_relu(h);
                    h = self.conv(g, &format!("enc{l}b"), h)?;
                    h = g.leaky_relu(h);
                    let head = self.conv(g, &format!("lat{l}"), h)?;
                    levels.push(self.split_gaussian(g, head, arch.latent)?);
                    h = g.downsample(h)?;
                }
                h = self.conv(g, "enc_bottom", h)?;
                h = g.leaky_relu(h);
                let head = self.conv(g, &format!("lat{}", arch.depth), h)?;
                levels.push(self.split_gaussian(g, head, arch.latent)?);
                Ok(levels)
            }
        }
    }

    /// Object distribution given one sample per latent level.
    pub fn decode(&self, g: &mut Graph<T>, z: &[Var]) -> Result<ObjectDistribution> {
        let arch = &self.model.arch;
        let shapes = arch.latent_shapes();
        if z.len() != shapes.len()
            || z.iter()
                .zip(&shapes)
                .any(|(&v, s)| g.shape(v) != s.as_slice())
        {
            let got: Vec<Vec<usize>> = z.iter().map(|&v| g.shape(v).to_vec()).collect();
            return Err(Error::shape(
                "decode",
                format!("latents {got:?}, expected {shapes:?}"),
            ));
        }
        let n = arch.image_size;
        let (mean, lv) = match arch.architecture {
            Architecture::Mlp => {
                let mut h = z[0];
                for i in 0..arch.widths.len() {
                    h = self.dense(g, &format!("dec{i}"), h)?;
                    h = g.leaky_relu(h);
                }
                let head = self.dense(g, "dec_head", h)?;
                let px = n * n;
                (g.slice(head, 0, px)?, g.slice(head, px, px)?)
            }
            Architecture::Unet => {
                let mut h = self.conv(g, "dec_bottom", z[arch.depth])?;
                h = g.leaky_relu(h);
                for l in (0..arch.depth).rev() {
                    h = g.upsample(h)?;
                    h = g.concat(&[h, z[l]])?;
                    h = self.conv(g, &format!("dec{l}a"), h)?;
                    h = g.leaky_relu(h);
                    h = self.conv(g, &format!("dec{l}b"), h)?;
                    h = g.leaky_relu(h);
                }
                let head = self.conv(g, "dec_head", h)?;
                (g.slice(head, 0, 1)?, g.slice(head, 1, 1)?)
            }
        };
        let mean = g.softplus(mean);
        let mean = g.reshape(mean, &[n, n])?;
        let lv = g.reshape(lv, &[n, n])?;
        let logvar = g.clamp(
            lv,
            crate::diffgraph::LOGVAR_MIN,
            crate::diffgraph::LOGVAR_MAX,
        );
        Ok(ObjectDistribution { mean, logvar })
    }
}

//! Define-by-run reverse-mode graph.
//!
//! Nodes are appended in evaluation order, so node indices are already a
//! topological order and the backward sweep is a single reverse scan.

use std::sync::Arc;

use statrs::function::gamma::ln_gamma;

use crate::diffgraph::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fixed linear operator usable as a graph node; backward applies the adjoint.
pub trait LinearMap<T: Scalar>: Send + Sync {
    fn in_len(&self) -> usize;
    fn out_len(&self) -> usize;
    /// `out ← A x`
    fn apply(&self, x: &[T], out: &mut [T]);
    /// `out ← out + Aᵀ y`
    fn adjoint_accumulate(&self, y: &[T], out: &mut [T]);
}

pub const LEAKY_SLOPE: f64 = 0.1;

enum Op<T: Scalar> {
    Leaf,
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<T>,
    },
    AvgPool2 {
        x: Var,
    },
    Upsample2 {
        x: Var,
    },
    LeakyRelu {
        x: Var,
    },
    Softplus {
        x: Var,
    },
    Exp {
        x: Var,
    },
    Ln {
        x: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Slice {
        x: Var,
        offset: usize,
    },
    Reshape {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: T,
    },
    AddScalar {
        x: Var,
    },
    Sum {
        x: Var,
    },
    Clamp {
        x: Var,
        lo: T,
        hi: T,
    },
    Linear {
        x: Var,
        map: Arc<dyn LinearMap<T>>,
    },
    PoissonLoglik {
        rates: Var,
        counts: Vec<T>,
        floor: T,
    },
}

impl<T: Scalar> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Dense { .. } => "dense",
            Op::Conv2d { .. } => "conv2d",
            Op::AvgPool2 { .. } => "downsample",
            Op::Upsample2 { .. } => "upsample",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Softplus { .. } => "softplus",
            Op::Exp { .. } => "exp",
            Op::Ln { .. } => "ln",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape { .. } => "reshape",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::AddScalar { .. } => "add_scalar",
            Op::Sum { .. } => "reduce_sum",
            Op::Clamp { .. } => "clamp",
            Op::Linear { .. } => "linear_map",
            Op::PoissonLoglik { .. } => "poisson_loglik",
        }
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

/// Result of a backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    /// How many times each node's vector-Jacobian product ran.
    pub vjp_calls: Vec<u32>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss w.r.t. `v`; `None` if `v` does not influence it
    /// through differentiable nodes.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient w.r.t. `v`, zeros when `v` is unreachable.
    pub fn get_or_zero(&self, v: Var, len: usize) -> Vec<T> {
        self.get(v)
            .map_or_else(|| vec![T::zero(); len], <[T]>::to_vec)
    }

    /// Like [`Gradients::get_or_zero`], moving the stored vector out.
    pub fn take_or_zero(&mut self, v: Var, len: usize) -> Vec<T> {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| vec![T::zero(); len])
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    if x > T::of(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn acc<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// Unfolds a zero-padded 3×3 neighbourhood: `[c·9, h·w]`.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut cols = vec![T::zero(); c * 9 * hw];
    for ch in 0..c {
        let src = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (ch * 9 + ky * 3 + kx) * hw;
                let dst = &mut cols[row..row + hw];
                for i in 0..h {
                    let si = i as isize + ky as isize - 1;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let si = si as usize;
                    let (j0, j1) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                    for j in j0..j1 {
                        dst[i * w + j] = src[si * w + j + kx - 1];
                    }
                }
            }
        }
    }
    cols
}

fn col2im_acc<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let dst = &mut dx[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (ch * 9 + ky * 3 + kx) * hw;
                let src = &cols[row..row + hw];
                for i in 0..h {
                    let si = i as isize + ky as isize - 1;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let si = si as usize;
                    let (j0, j1) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                    for j in j0..j1 {
                        dst[si * w + j + kx - 1] += src[i * w + j];
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Graph { nodes: Vec::new() }
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Dense { x, w, b } | Op::Conv2d { x, w, b, .. } => {
                self.rg(*x) || self.rg(*w) || self.rg(*b)
            }
            Op::Concat { parts } => parts.iter().any(|p| self.rg(*p)),
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => self.rg(*a) || self.rg(*b),
            Op::AvgPool2 { x }
            | Op::Upsample2 { x }
            | Op::LeakyRelu { x }
            | Op::Softplus { x }
            | Op::Exp { x }
            | Op::Ln { x }
            | Op::Slice { x, .. }
            | Op::Reshape { x }
            | Op::Scale { x, .. }
            | Op::AddScalar { x }
            | Op::Sum { x }
            | Op::Clamp { x, .. }
            | Op::Linear { x, .. } => self.rg(*x),
            Op::PoissonLoglik { rates, .. } => self.rg(*rates),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; gradients do not flow into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        let v = self.push(t, Op::Leaf);
        self.nodes[v.0].requires_grad = true;
        v
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.nodes[v.0].value.clone();
        self.input(t)
    }

    /// `y = x Wᵀ + b` over the last axis of `x`; `w: [out, in]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        let inp = *xs.last().unwrap_or(&0);
        if ws.len() != 2 || ws[1] != inp || bs != [ws[0]] {
            return Err(Error::shape(
                "dense",
                format!("x {xs:?}, w {ws:?}, b {bs:?}"),
            ));
        }
        let out = ws[0];
        let rows = self.value(x).numel() / inp;
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = out;
        let mut y = Vec::with_capacity(rows * out);
        for _ in 0..rows {
            y.extend_from_slice(&self.value(b).data);
        }
        T::gemm(
            rows,
            inp,
            out,
            T::one(),
            &self.value(x).data,
            false,
            &self.value(w).data,
            true,
            T::one(),
            &mut y,
        );
        Ok(self.push(Tensor::new(shape, y), Op::Dense { x, w, b }))
    }

    /// 3×3 convolution, stride 1, zero padding 1; `x: [c, h, w]`,
    /// `w: [o, c, 3, 3]`, `b: [o]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 3
            || ws.len() != 4
            || ws[1] != xs[0]
            || ws[2] != 3
            || ws[3] != 3
            || bs != [ws[0]]
        {
            return Err(Error::shape(
                "conv2d",
                format!("x {xs:?}, w {ws:?}, b {bs:?}"),
            ));
        }
        let (c, h, wd, o) = (xs[0], xs[1], xs[2], ws[0]);
        let hw = h * wd;
        let cols = im2col(&self.value(x).data, c, h, wd);
        let mut y = Vec::with_capacity(o * hw);
        for &bias in &self.value(b).data {
            y.extend(std::iter::repeat_n(bias, hw));
        }
        T::gemm(
            o,
            c * 9,
            hw,
            T::one(),
            &self.value(w).data,
            false,
            &cols,
            false,
            T::one(),
            &mut y,
        );
        Ok(self.push(Tensor::new(vec![o, h, wd], y), Op::Conv2d { x, w, b, cols }))
    }

    /// 2× average pooling of a `[c, h, w]` tensor with even `h`, `w`.
    pub fn downsample(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 3 || xs[1] % 2 != 0 || xs[2] % 2 != 0 {
            return Err(Error::shape("downsample", format!("x {xs:?}")));
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let (h2, w2) = (h / 2, w / 2);
        let src = &self.value(x).data;
        let quarter = T::of(0.25);
        let mut y = vec![T::zero(); c * h2 * w2];
        for ch in 0..c {
            for i in 0..h2 {
                for j in 0..w2 {
                    let base = ch * h * w + 2 * i * w + 2 * j;
                    y[ch * h2 * w2 + i * w2 + j] =
                        (src[base] + src[base + 1] + src[base + w] + src[base + w + 1]) * quarter;
                }
            }
        }
        Ok(self.push(Tensor::new(vec![c, h2, w2], y), Op::AvgPool2 { x }))
    }

    /// 2× nearest-neighbour upsampling of `[c, h, w]`.
    pub fn upsample(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 3 {
            return Err(Error::shape("upsample", format!("x {xs:?}")));
        }
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let src = &self.value(x).data;
        let mut y = vec![T::zero(); c * 4 * h * w];
        for ch in 0..c {
            for i in 0..2 * h {
                for j in 0..2 * w {
                    y[ch * 4 * h * w + i * 2 * w + j] = src[ch * h * w + (i / 2) * w + j / 2];
                }
            }
        }
        Ok(self.push(Tensor::new(vec![c, 2 * h, 2 * w], y), Op::Upsample2 { x }))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let t = self.value(x);
        let y = Tensor::new(t.shape.clone(), t.data.iter().map(|&v| f(v)).collect());
        self.push(y, op)
    }

    pub fn leaky_relu(&mut self, x: Var) -> Var {
        let s = T::of(LEAKY_SLOPE);
        self.unary(
            x,
            |v| if v > T::zero() { v } else { v * s },
            Op::LeakyRelu { x },
        )
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus { x })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, T::exp, Op::Exp { x })
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, T::ln, Op::Ln { x })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        self.unary(x, |v| v * c, Op::Scale { x, c })
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        self.unary(x, |v| v + c, Op::AddScalar { x })
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (lo, hi) = (T::of(lo), T::of(hi));
        self.unary(x, |v| v.max(lo).min(hi), Op::Clamp { x, lo, hi })
    }

    /// Concatenation along the leading axis; trailing axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(Error::shape(
                    "concat",
                    format!("{s:?} does not match trailing axes {tail:?}"),
                ));
            }
            lead += s[0];
            data.extend_from_slice(&self.value(p).data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        Ok(self.push(
            Tensor::new(shape, data),
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Rows `start..start + len` along the leading axis.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.is_empty() || start + len > s[0] || len == 0 {
            return Err(Error::shape(
                "slice",
                format!("rows {start}..{} of {s:?}", start + len),
            ));
        }
        let inner: usize = s[1..].iter().product();
        let data = self.value(x).data[start * inner..(start + len) * inner].to_vec();
        let mut shape = s;
        shape[0] = len;
        Ok(self.push(
            Tensor::new(shape, data),
            Op::Slice {
                x,
                offset: start * inner,
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = self.value(x).numel();
        if shape.iter().product::<usize>() != n {
            return Err(Error::shape(
                "reshape",
                format!("{:?} → {shape:?}", self.shape(x)),
            ));
        }
        let data = self.value(x).data.clone();
        Ok(self.push(Tensor::new(shape.to_vec(), data), Op::Reshape { x }))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data
            .iter()
            .zip(&tb.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = ta.shape.clone();
        Ok(self.push(Tensor::new(shape, data), op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().fold(T::zero(), |a, &b| a + b);
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    /// Applies a fixed linear operator to the flattened `x`.
    pub fn linear(&mut self, x: Var, map: Arc<dyn LinearMap<T>>) -> Result<Var> {
        let n = self.value(x).numel();
        if n != map.in_len() {
            return Err(Error::shape(
                "linear_map",
                format!("operator takes {} values, got {n}", map.in_len()),
            ));
        }
        let mut out = vec![T::zero(); map.out_len()];
        map.apply(&self.value(x).data, &mut out);
        let len = out.len();
        Ok(self.push(Tensor::new(vec![len], out), Op::Linear { x, map }))
    }

    /// `Σ k ln λ − λ − ln k!` with `λ` floored at `floor`.
    pub fn poisson_loglik(&mut self, rates: Var, counts: &[T], floor: f64) -> Result<Var> {
        let r = self.value(rates);
        if r.numel() != counts.len() {
            return Err(Error::shape(
                "poisson_loglik",
                format!("{} rates for {} counts", r.numel(), counts.len()),
            ));
        }
        let total: f64 = r
            .data
            .iter()
            .zip(counts)
            .map(|(&l, &k)| {
                let (l, k) = (l.f64().max(floor), k.f64());
                k * l.ln() - l - ln_gamma(k + 1.0)
            })
            .sum();
        Ok(self.push(
            Tensor::scalar(T::of(total)),
            Op::PoissonLoglik {
                rates,
                counts: counts.to_vec(),
                floor: T::of(floor),
            },
        ))
    }

    /// Gradients of the scalar `loss` w.r.t. every differentiable node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        let mut vjp_calls = vec![0u32; n];
        if self.rg(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !matches!(node.op, Op::Leaf) {
                vjp_calls[i] += 1;
                self.vjp(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, vjp_calls })
    }

    fn send(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.rg(v) {
            return;
        }
        let slot = &mut grads[v.0];
        let buf = slot.get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.numel()]);
        f(buf);
    }

    fn vjp(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let y = &node.value.data;
        match &node.op {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (out, inp) = (wv.shape[0], wv.shape[1]);
                let rows = xv.numel() / inp;
                self.send(grads, *x, |dx| {
                    T::gemm(
                        rows,
                        out,
                        inp,
                        T::one(),
                        g,
                        false,
                        &wv.data,
                        false,
                        T::one(),
                        dx,
                    )
                });
                self.send(grads, *w, |dw| {
                    T::gemm(
                        out,
                        rows,
                        inp,
                        T::one(),
                        g,
                        true,
                        &xv.data,
                        false,
                        T::one(),
                        dw,
                    )
                });
                self.send(grads, *b, |db| {
                    for r in 0..rows {
                        acc(db, &g[r * out..(r + 1) * out]);
                    }
                });
            }
            Op::Conv2d { x, w, b, cols } => {
                let xs = &self.value(*x).shape;
                let (c, h, wd) = (xs[0], xs[1], xs[2]);
                let hw = h * wd;
                let wv = self.value(*w);
                let o = wv.shape[0];
                self.send(grads, *w, |dw| {
                    T::gemm(o, hw, c * 9, T::one(), g, false, cols, true, T::one(), dw)
                });
                self.send(grads, *b, |db| {
                    for (ch, d) in db.iter_mut().enumerate() {
                        *d += g[ch * hw..(ch + 1) * hw]
                            .iter()
                            .fold(T::zero(), |a, &v| a + v);
                    }
                });
                self.send(grads, *x, |dx| {
                    let mut dcols = vec![T::zero(); c * 9 * hw];
                    T::gemm(
                        c * 9,
                        o,
                        hw,
                        T::one(),
                        &wv.data,
                        true,
                        g,
                        false,
                        T::zero(),
                        &mut dcols,
                    );
                    col2im_acc(&dcols, c, h, wd, dx);
                });
            }
            Op::AvgPool2 { x } => {
                let xs = &self.value(*x).shape;
                let (c, h, w) = (xs[0], xs[1], xs[2]);
                let (h2, w2) = (h / 2, w / 2);
                let q = T::of(0.25);
                self.send(grads, *x, |dx| {
                    for ch in 0..c {
                        for i in 0..h2 {
                            for j in 0..w2 {
                                let gv = g[ch * h2 * w2 + i * w2 + j] * q;
                                let base = ch * h * w + 2 * i * w + 2 * j;
                                dx[base] += gv;
                                dx[base + 1] += gv;
                                dx[base + w] += gv;
                                dx[base + w + 1] += gv;
                            }
                        }
                    }
                });
            }
            Op::Upsample2 { x } => {
                let xs = &self.value(*x).shape;
                let (c, h, w) = (xs[0], xs[1], xs[2]);
                self.send(grads, *x, |dx| {
                    for ch in 0..c {
                        for i in 0..2 * h {
                            for j in 0..2 * w {
                                dx[ch * h * w + (i / 2) * w + j / 2] +=
                                    g[ch * 4 * h * w + i * 2 * w + j];
                            }
                        }
                    }
                });
            }
            Op::LeakyRelu { x } => {
                let xv = &self.value(*x).data;
                let s = T::of(LEAKY_SLOPE);
                self.send(grads, *x, |dx| {
                    for ((d, &gv), &xi) in dx.iter_mut().zip(g).zip(xv) {
                        *d += if xi > T::zero() { gv } else { gv * s };
                    }
                });
            }
            Op::Softplus { x } => {
                let xv = &self.value(*x).data;
                self.send(grads, *x, |dx| {
                    for ((d, &gv), &xi) in dx.iter_mut().zip(g).zip(xv) {
                        *d += gv * sigmoid(xi);
                    }
                });
            }
            Op::Exp { x } => self.send(grads, *x, |dx| {
                for ((d, &gv), &yi) in dx.iter_mut().zip(g).zip(y) {
                    *d += gv * yi;
                }
            }),
            Op::Ln { x } => {
                let xv = &self.value(*x).data;
                self.send(grads, *x, |dx| {
                    for ((d, &gv), &xi) in dx.iter_mut().zip(g).zip(xv) {
                        *d += gv / xi;
                    }
                });
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    self.send(grads, p, |dp| acc(dp, &g[off..off + len]));
                    off += len;
                }
            }
            Op::Slice { x, offset } => {
                self.send(grads, *x, |dx| acc(&mut dx[*offset..*offset + g.len()], g));
            }
            Op::Reshape { x } | Op::AddScalar { x } => self.send(grads, *x, |dx| acc(dx, g)),
            Op::Add { a, b } => {
                self.send(grads, *a, |da| acc(da, g));
                self.send(grads, *b, |db| acc(db, g));
            }
            Op::Sub { a, b } => {
                self.send(grads, *a, |da| acc(da, g));
                self.send(grads, *b, |db| {
                    for (d, &gv) in db.iter_mut().zip(g) {
                        *d -= gv;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                self.send(grads, *a, |da| {
                    for ((d, &gv), &bi) in da.iter_mut().zip(g).zip(bv) {
                        *d += gv * bi;
                    }
                });
                self.send(grads, *b, |db| {
                    for ((d, &gv), &ai) in db.iter_mut().zip(g).zip(av) {
                        *d += gv * ai;
                    }
                });
            }
            Op::Scale { x, c } => self.send(grads, *x, |dx| {
                for (d, &gv) in dx.iter_mut().zip(g) {
                    *d += gv * *c;
                }
            }),
            Op::Sum { x } => self.send(grads, *x, |dx| {
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }),
            Op::Clamp { x, lo, hi } => {
                let xv = &self.value(*x).data;
                self.send(grads, *x, |dx| {
                    for ((d, &gv), &xi) in dx.iter_mut().zip(g).zip(xv) {
                        if xi >= *lo && xi <= *hi {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Linear { x, map } => self.send(grads, *x, |dx| map.adjoint_accumulate(g, dx)),
            Op::PoissonLoglik {
                rates,
                counts,
                floor,
            } => {
                let rv = &self.value(*rates).data;
                self.send(grads, *rates, |dr| {
                    for ((d, &l), &k) in dr.iter_mut().zip(rv).zip(counts) {
                        if l > *floor {
                            *d += g[0] * (k / l - T::one());
                        }
                    }
                });
            }
        }
    }
}

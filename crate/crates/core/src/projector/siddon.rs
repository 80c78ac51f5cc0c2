//! Exact ray–pixel intersection lengths for a centered parallel-beam geometry.
//!
//! The detector has one bin per image column, centered on the grid with unit
//! pitch. Bin `j` at angle `θ` integrates along the line
//! `{ t_j·(cos θ, sin θ) + s·(−sin θ, cos θ) }` with `t_j = j − n/2 + 1/2`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::diffgraph::{LinearMap, Scalar};

/// Sparse weights of all detector bins at one angle, in CSR layout.
#[derive(Debug, Clone)]
pub struct AngleBlock {
    pub angle: f64,
    pub bins: usize,
    row_start: Vec<u32>,
    cols: Vec<u32>,
    weights: Vec<f64>,
}

impl AngleBlock {
    pub fn new(n: usize, angle: f64) -> Self {
        let mut row_start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        row_start.push(0);
        for bin in 0..n {
            let t = bin as f64 - n as f64 / 2.0 + 0.5;
            trace_ray(n, angle, t, |pixel, len| {
                cols.push(pixel as u32);
                weights.push(len);
            });
            row_start.push(cols.len() as u32);
        }
        AngleBlock {
            angle,
            bins: n,
            row_start,
            cols,
            weights,
        }
    }

    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    /// `(pixel, length)` pairs of one detector bin.
    pub fn row(&self, bin: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (
            self.row_start[bin] as usize,
            self.row_start[bin + 1] as usize,
        );
        self.cols[a..b]
            .iter()
            .zip(&self.weights[a..b])
            .map(|(&c, &w)| (c as usize, w))
    }
}

/// Walks the ray `t·e + s·e⊥` through an `n×n` grid, reporting each crossed
/// pixel (row-major index) with its intersection length.
pub fn trace_ray(n: usize, angle: f64, t: f64, mut visit: impl FnMut(usize, f64)) {
    let half = n as f64 / 2.0;
    let (sin, cos) = angle.sin_cos();
    let (px, py) = (t * cos, t * sin);
    let (dx, dy) = (-sin, cos);

    // Parameter interval where the ray lies inside the box [-half, half]².
    let mut s_lo = f64::NEG_INFINITY;
    let mut s_hi = f64::INFINITY;
    for (p, d) in [(px, dx), (py, dy)] {
        if d.abs() < 1e-12 {
            if p < -half || p > half {
                return;
            }
        } else {
            let a = (-half - p) / d;
            let b = (half - p) / d;
            s_lo = s_lo.max(a.min(b));
            s_hi = s_hi.min(a.max(b));
        }
    }
    if s_hi <= s_lo {
        return;
    }

    let mut crossings = Vec::with_capacity(2 * n + 2);
    crossings.push(s_lo);
    crossings.push(s_hi);
    for (p, d) in [(px, dx), (py, dy)] {
        if d.abs() < 1e-12 {
            continue;
        }
        for i in 0..=n {
            let s = (i as f64 - half - p) / d;
            if s > s_lo && s < s_hi {
                crossings.push(s);
            }
        }
    }
    crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());

    for w in crossings.windows(2) {
        let len = w[1] - w[0];
        if len <= 1e-12 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let x = px + mid * dx;
        let y = py + mid * dy;
        let col = (x + half).floor();
        let yi = (y + half).floor();
        if col < 0.0 || yi < 0.0 || col >= n as f64 || yi >= n as f64 {
            continue;
        }
        let row = n - 1 - yi as usize;
        visit(row * n + col as usize, len);
    }
}

/// The discrete Radon operator of one schedule: rows are `(angle, bin)` pairs
/// in angle-major order, columns are row-major pixels.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    n: usize,
    blocks: Vec<Arc<AngleBlock>>,
}

impl SystemMatrix {
    pub fn new(n: usize, angles: &[f64]) -> Self {
        SystemMatrix {
            n,
            blocks: angles
                .iter()
                .map(|&a| Arc::new(AngleBlock::new(n, a)))
                .collect(),
        }
    }

    pub fn from_blocks(n: usize, blocks: Vec<Arc<AngleBlock>>) -> Self {
        SystemMatrix { n, blocks }
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn n_angles(&self) -> usize {
        self.blocks.len()
    }

    pub fn rows(&self) -> usize {
        self.blocks.len() * self.n
    }

    pub fn cols(&self) -> usize {
        self.n * self.n
    }

    pub fn blocks(&self) -> &[Arc<AngleBlock>] {
        &self.blocks
    }

    /// `out ← R x`.
    pub fn forward_into<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        assert_eq!(x.len(), self.cols());
        assert_eq!(out.len(), self.rows());
        for (a, block) in self.blocks.iter().enumerate() {
            for bin in 0..self.n {
                let mut acc = 0.0f64;
                for (pix, w) in block.row(bin) {
                    acc += w * x[pix].f64();
                }
                out[a * self.n + bin] = T::of(acc);
            }
        }
    }

    /// `out ← out + Rᵀ y`.
    pub fn adjoint_accumulate<T: Scalar>(&self, y: &[T], out: &mut [T]) {
        assert_eq!(y.len(), self.rows());
        assert_eq!(out.len(), self.cols());
        for (a, block) in self.blocks.iter().enumerate() {
            for bin in 0..self.n {
                let v = y[a * self.n + bin];
                if v == T::zero() {
                    continue;
                }
                for (pix, w) in block.row(bin) {
                    out[pix] += T::of(w) * v;
                }
            }
        }
    }

    pub fn forward<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows()];
        self.forward_into(x, &mut out);
        out
    }

    pub fn adjoint<T: Scalar>(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols()];
        self.adjoint_accumulate(y, &mut out);
        out
    }

    /// Row sums `R·1`.
    pub fn row_sums(&self) -> Vec<f64> {
        self.forward(&vec![1.0f64; self.cols()])
    }

    /// Column sums `Rᵀ·1`.
    pub fn col_sums(&self) -> Vec<f64> {
        self.adjoint(&vec![1.0f64; self.rows()])
    }
}

impl<T: Scalar> LinearMap<T> for SystemMatrix {
    fn in_len(&self) -> usize {
        self.cols()
    }

    fn out_len(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[T], out: &mut [T]) {
        self.forward_into(x, out);
    }

    fn adjoint_accumulate(&self, y: &[T], out: &mut [T]) {
        SystemMatrix::adjoint_accumulate(self, y, out);
    }
}

/// Shares per-angle blocks between schedules drawn from the same source grid.
#[derive(Debug, Default)]
pub struct RayCache {
    blocks: Mutex<HashMap<(usize, u64), Arc<AngleBlock>>>,
}

impl RayCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn matrix(&self, n: usize, angles: &[f64]) -> SystemMatrix {
        let mut map = self.blocks.lock().unwrap();
        let blocks = angles
            .iter()
            .map(|&a| {
                map.entry((n, a.to_bits()))
                    .or_insert_with(|| Arc::new(AngleBlock::new(n, a)))
                    .clone()
            })
            .collect();
        SystemMatrix::from_blocks(n, blocks)
    }
}

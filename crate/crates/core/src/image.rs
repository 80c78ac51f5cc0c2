//! Square attenuation maps.
//!
//! Pixels are stored row-major with row 0 at the top of the image. The grid
//! is centered on the origin with unit pixel pitch, so pixel `(row, col)`
//! covers `x ∈ [col - n/2, col - n/2 + 1]`, `y ∈ [n/2 - row - 1, n/2 - row]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(width: usize, height: usize) -> Self {
        ImageGrid {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn square(n: usize) -> Self {
        Self::zeros(n, n)
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape(
                "ImageGrid::from_values",
                format!("{} values for a {width}x{height} grid", values.len()),
            ));
        }
        Ok(ImageGrid {
            width,
            height,
            values,
        })
    }

    /// Builds a grid from nested rows, top row first.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::shape("ImageGrid::from_rows", "ragged rows"));
        }
        Ok(ImageGrid {
            width,
            height,
            values: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Side length; panics in debug builds for non-square grids.
    pub fn side(&self) -> usize {
        debug_assert_eq!(self.width, self.height);
        self.width
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when every value is finite and nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixel-center coordinates `(x, y)` of `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = col as f64 - self.width as f64 / 2.0 + 0.5;
        let y = self.height as f64 / 2.0 - row as f64 - 0.5;
        (x, y)
    }
}

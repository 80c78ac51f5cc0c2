//! The `PVT1` tensor container.
//!
//! Layout: the four magic bytes `PVT1`, a little-endian `u32` header length,
//! a JSON header `{"dtype":"f32","shape":[...],"order":"row-major"}`, then the
//! raw little-endian `f32` payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PVT1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub order: String,
}

impl TensorHeader {
    pub fn f32(shape: &[usize]) -> Self {
        TensorHeader {
            dtype: "f32".to_string(),
            shape: shape.to_vec(),
            order: "row-major".to_string(),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// An owned `f32` tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl StoredTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        StoredTensor { shape, data }
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Self {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

pub fn encode(shape: &[usize], data: &[f32]) -> Result<Vec<u8>> {
    let header = TensorHeader::f32(shape);
    if header.numel() != data.len() {
        return Err(Error::shape(
            "tensorio::encode",
            format!(
                "shape {:?} holds {} values, got {}",
                shape,
                header.numel(),
                data.len()
            ),
        ));
    }
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<StoredTensor> {
    let bad = |reason: &str| Error::Container {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing PVT1 magic"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes
        .get(8..8 + hlen)
        .ok_or_else(|| bad("truncated header"))?;
    let header: TensorHeader = serde_json::from_slice(body)?;
    if header.dtype != "f32" || header.order != "row-major" {
        return Err(bad("unsupported dtype or order"));
    }
    let payload = &bytes[8 + hlen..];
    if payload.len() != 4 * header.numel() {
        return Err(bad("payload length does not match shape"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(StoredTensor {
        shape: header.shape,
        data,
    })
}

pub fn write_tensor(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let bytes = encode(shape, data)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn write_f64(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let data: Vec<f32> = data.iter().map(|&v| v as f32).collect();
    write_tensor(path, shape, &data)
}

pub fn read_tensor(path: &Path) -> Result<StoredTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

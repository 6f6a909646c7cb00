//! Minimal little-endian tensor container.
//!
//! ```text
//! magic   8 bytes  "MOSTTNSR"
//! version u32      1
//! ndim    u32
//! dims    ndim × u32
//! dtype   u32      0 = f32
//! payload product(dims) × 4 bytes, row-major
//! ```
//!
//! Maps are stored as `H × W × C`; one file per map inside a directory.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Geometry5;
use crate::grid::Grid;
use crate::labelgen::LabelMaps;
use crate::pipeline::PredictionMaps;

pub const MAGIC: &[u8; 8] = b"MOSTTNSR";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;
/// Upper bound on `ndim` accepted by the decoder.
pub const MAX_DIMS: usize = 8;

pub const SCORE_FILE: &str = "score.tnsr";
pub const GEOMETRY_FILE: &str = "geometry.tnsr";
pub const GEOMETRY_REFINED_FILE: &str = "geometry_refined.tnsr";
pub const POSSENS_FILE: &str = "possens.tnsr";
pub const TRAIN_MASK_FILE: &str = "train_mask.tnsr";
pub const INSTANCE_ID_FILE: &str = "instance_id.tnsr";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        if expected != Some(data.len()) {
            return Err(Error::Shape {
                expected: dims,
                actual: vec![data.len()],
            });
        }
        if dims.len() > MAX_DIMS || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Invalid(format!("tensor dims {dims:?} cannot be encoded")));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::NotATensor);
        }
        let mut cursor = Cursor {
            bytes,
            pos: MAGIC.len(),
        };
        let version = cursor.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let ndim = cursor.u32()? as usize;
        if ndim > MAX_DIMS {
            return Err(Error::Invalid(format!("tensor has {ndim} dimensions (at most {MAX_DIMS})")));
        }
        let dims = (0..ndim).map(|_| cursor.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let dtype = cursor.u32()?;
        if dtype != DTYPE_F32 {
            return Err(Error::UnsupportedDtype(dtype));
        }
        let payload = &bytes[cursor.pos..];
        let expected = dims
            .iter()
            .try_fold(4usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Invalid(format!("tensor dims {dims:?} overflow")))?;
        if payload.len() != expected {
            return Err(Error::PayloadSize {
                expected,
                actual: payload.len(),
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    /// Checks the shape against `expected`, where `None` matches any extent.
    pub fn expect_dims(&self, expected: &[Option<usize>]) -> Result<()> {
        let ok = self.dims.len() == expected.len()
            && self.dims.iter().zip(expected).all(|(&d, e)| e.is_none_or(|e| e == d));
        if ok {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: expected.iter().map(|e| e.unwrap_or(0)).collect(),
                actual: self.dims.clone(),
            })
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Invalid("truncated tensor header".into()))?;
        self.pos = end;
        Ok(u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    fs::write(path, tensor.encode())?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    Tensor::decode(&fs::read(path)?)
}

/// `H × W × C` tensor from per-pixel channel vectors.
pub fn grid_to_tensor<T, const C: usize>(grid: &Grid<T>, channels: impl Fn(&T) -> [f64; C]) -> Tensor {
    let data = grid
        .as_slice()
        .iter()
        .flat_map(|v| channels(v).map(|c| c as f32))
        .collect();
    Tensor::new(vec![grid.height(), grid.width(), C], data).expect("consistent grid")
}

/// Inverse of [`grid_to_tensor`]; the tensor must be `H × W × C`.
pub fn tensor_to_grid<T, const C: usize>(tensor: &Tensor, build: impl Fn([f64; C]) -> T) -> Result<Grid<T>> {
    tensor.expect_dims(&[None, None, Some(C)])?;
    let (h, w) = (tensor.dims[0], tensor.dims[1]);
    let data = tensor
        .data
        .chunks_exact(C)
        .map(|c| build(std::array::from_fn(|k| f64::from(c[k]))))
        .collect();
    Grid::from_vec(h, w, data)
}

fn geometry_tensor(g: &Grid<Geometry5>) -> Tensor {
    grid_to_tensor(g, |v| v.to_array())
}

/// Writes every label map into `dir`.
pub fn write_label_maps(dir: impl AsRef<Path>, labels: &LabelMaps) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_tensor(dir.join(SCORE_FILE), &grid_to_tensor(&labels.score, |&s| [f64::from(s)]))?;
    write_tensor(dir.join(GEOMETRY_FILE), &geometry_tensor(&labels.geometry))?;
    write_tensor(dir.join(POSSENS_FILE), &grid_to_tensor(&labels.possens, |&p| p))?;
    write_tensor(dir.join(TRAIN_MASK_FILE), &grid_to_tensor(&labels.train_mask, |&m| [f64::from(m)]))?;
    write_tensor(dir.join(INSTANCE_ID_FILE), &grid_to_tensor(&labels.instance_id, |&i| [f64::from(i)]))?;
    Ok(())
}

pub fn write_prediction_maps(dir: impl AsRef<Path>, maps: &PredictionMaps) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_tensor(dir.join(SCORE_FILE), &grid_to_tensor(&maps.score, |&s| [s]))?;
    write_tensor(dir.join(GEOMETRY_FILE), &geometry_tensor(&maps.geometry_coarse))?;
    if let Some(r) = &maps.geometry_refined {
        write_tensor(dir.join(GEOMETRY_REFINED_FILE), &geometry_tensor(r))?;
    }
    write_tensor(dir.join(POSSENS_FILE), &grid_to_tensor(&maps.possens, |&p| p))?;
    Ok(())
}

/// Reads maps written by [`write_prediction_maps`] or [`write_label_maps`].
pub fn read_prediction_maps(dir: impl AsRef<Path>, stride: u32) -> Result<PredictionMaps> {
    let dir = dir.as_ref();
    let score = tensor_to_grid(&read_tensor(dir.join(SCORE_FILE))?, |[s]| s)?;
    let geometry_coarse = tensor_to_grid(&read_tensor(dir.join(GEOMETRY_FILE))?, Geometry5::from_array)?;
    let refined_path = dir.join(GEOMETRY_REFINED_FILE);
    let geometry_refined = if refined_path.exists() {
        Some(tensor_to_grid(&read_tensor(refined_path)?, Geometry5::from_array)?)
    } else {
        None
    };
    let possens = tensor_to_grid(&read_tensor(dir.join(POSSENS_FILE))?, |p: [f64; 4]| p)?;
    let maps = PredictionMaps {
        stride,
        score,
        geometry_coarse,
        geometry_refined,
        possens,
    };
    maps.validate()?;
    Ok(maps)
}

//! Dense NHWC float tensors and the binary tensor file format.
//!
//! File layout (all little-endian):
//!
//! ```text
//! magic   b"PNT1"
//! dtype   u32   0 = f32, 1 = f16, 2 = u8, 3 = i16
//! dims    4 x u32 (N, H, W, C)
//! payload N*H*W*C elements
//! ```
//!
//! Integer payloads are read as raw values; callers choose the peak for metrics.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::Shape;
use crate::rng::SplitMix64;

pub const MAGIC: &[u8; 4] = b"PNT1";

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a tensor file")]
    BadMagic,
    #[error("unknown dtype code {0}")]
    UnknownDtype(u32),
    #[error("invalid shape {0:?}")]
    InvalidShape([u32; 4]),
    #[error("payload truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileDtype {
    F32 = 0,
    F16 = 1,
    U8 = 2,
    I16 = 3,
}

impl FileDtype {
    fn from_code(code: u32) -> Result<Self, TensorError> {
        Ok(match code {
            0 => FileDtype::F32,
            1 => FileDtype::F16,
            2 => FileDtype::U8,
            3 => FileDtype::I16,
            c => return Err(TensorError::UnknownDtype(c)),
        })
    }

    fn width(self) -> usize {
        match self {
            FileDtype::F32 => 4,
            FileDtype::F16 | FileDtype::I16 => 2,
            FileDtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Shape,
    pub data: Vec<f32>,
}

pub fn numel(shape: &Shape) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Self {
        assert_eq!(numel(&shape), data.len(), "tensor data does not match shape");
        Self { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Self {
            shape,
            data: vec![value; numel(&shape)],
        }
    }

    /// Uniform random values in `[lo, hi)` from a seeded SplitMix64 stream.
    pub fn random(shape: Shape, seed: u64, lo: f32, hi: f32) -> Self {
        let mut rng = SplitMix64::new(seed);
        let data = (0..numel(&shape)).map(|_| rng.uniform(lo, hi)).collect();
        Self { shape, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        let [_, hh, ww, cc] = self.shape;
        ((n * hh + h) * ww + w) * cc + c
    }

    #[inline]
    pub fn at(&self, n: usize, h: usize, w: usize, c: usize) -> f32 {
        self.data[self.offset(n, h, w, c)]
    }

    pub fn min_max(&self) -> Option<(f32, f32)> {
        self.data.iter().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TensorError> {
        w.write_all(MAGIC)?;
        w.write_all(&(FileDtype::F32 as u32).to_le_bytes())?;
        for d in self.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TensorError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TensorError::BadMagic);
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let dtype = FileDtype::from_code(u32::from_le_bytes(word))?;
        let mut dims = [0u32; 4];
        for d in dims.iter_mut() {
            r.read_exact(&mut word)?;
            *d = u32::from_le_bytes(word);
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(TensorError::InvalidShape(dims));
        }
        let shape = dims.map(|d| d as usize);
        let count = numel(&shape);
        let expected = count * dtype.width();
        let mut payload = Vec::with_capacity(expected);
        r.read_to_end(&mut payload)?;
        if payload.len() != expected {
            return Err(TensorError::Truncated {
                expected,
                got: payload.len(),
            });
        }
        let data = match dtype {
            FileDtype::F32 => payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            FileDtype::F16 => payload
                .chunks_exact(2)
                .map(|b| half::f16::from_le_bytes([b[0], b[1]]).to_f32())
                .collect(),
            FileDtype::U8 => payload.iter().map(|&b| b as f32).collect(),
            FileDtype::I16 => payload
                .chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32)
                .collect(),
        };
        Ok(Self { shape, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

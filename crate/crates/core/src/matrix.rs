//! Dense f64 matrices, the AMLT file format and deterministic test data.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[serde(rename = "row")]
    RowMajor,
    #[serde(rename = "col")]
    ColMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    /// Integers in [-8, 8] stored as doubles; sums stay exact.
    Int,
    /// Uniform in [0, 1).
    Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBuffer {
    pub rows: usize,
    pub cols: usize,
    pub layout: Layout,
    /// Elements between consecutive rows (row-major) or columns (column-major).
    pub stride: usize,
    pub data: Vec<f64>,
}

impl MatrixBuffer {
    pub fn zeros(rows: usize, cols: usize, layout: Layout) -> Self {
        let stride = match layout {
            Layout::RowMajor => cols,
            Layout::ColMajor => rows,
        };
        MatrixBuffer { rows, cols, layout, stride, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, layout: Layout, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols, layout);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, f(r, c));
            }
        }
        m
    }

    /// Wrap existing storage, checking that it covers every element.
    pub fn from_parts(rows: usize, cols: usize, layout: Layout, stride: usize, data: Vec<f64>) -> Result<Self> {
        let (inner, outer) = match layout {
            Layout::RowMajor => (cols, rows),
            Layout::ColMajor => (rows, cols),
        };
        if stride < inner {
            return Err(Error::InvalidArgument(format!("stride {stride} is smaller than the minor dimension {inner}")));
        }
        let need = if outer == 0 { 0 } else { (outer - 1) * stride + inner };
        if data.len() < need {
            return Err(Error::InvalidArgument(format!("{} elements given, {need} needed", data.len())));
        }
        Ok(MatrixBuffer { rows, cols, layout, stride, data })
    }

    /// Storage steps for a one-row and a one-column move.
    #[inline]
    pub fn strides(&self) -> (usize, usize) {
        match self.layout {
            Layout::RowMajor => (self.stride, 1),
            Layout::ColMajor => (1, self.stride),
        }
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize) -> usize {
        let (rs, cs) = self.strides();
        r * rs + c * cs
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[self.index(r, c)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let i = self.index(r, c);
        self.data[i] = v;
    }

    pub fn to_layout(&self, layout: Layout) -> MatrixBuffer {
        MatrixBuffer::from_fn(self.rows, self.cols, layout, |r, c| self.get(r, c))
    }

    /// Same logical contents regardless of layout and stride.
    pub fn same_values(&self, other: &MatrixBuffer) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && (0..self.rows).all(|r| (0..self.cols).all(|c| self.get(r, c).to_bits() == other.get(r, c).to_bits()))
    }

    /// Largest `|a - b| / max(|b|, 1)` over all elements.
    pub fn max_rel_error(&self, reference: &MatrixBuffer) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (a, b) = (self.get(r, c), reference.get(r, c));
                let e = if a == b { 0.0 } else { (a - b).abs() / b.abs().max(1.0) };
                worst = worst.max(if e.is_nan() { f64::INFINITY } else { e });
            }
        }
        worst
    }

    pub fn write_amlt(&self, mut w: impl Write) -> Result<()> {
        let dim = |n: usize| u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} does not fit in u32")));
        let mut header = [0u8; HEADER_LEN];
        header[..4].copy_from_slice(MAGIC);
        header[4..8].copy_from_slice(&dim(self.rows)?.to_le_bytes());
        header[8..12].copy_from_slice(&dim(self.cols)?.to_le_bytes());
        header[12] = match self.layout {
            Layout::RowMajor => 0,
            Layout::ColMajor => 1,
        };
        w.write_all(&header)?;
        let (outer, inner) = match self.layout {
            Layout::RowMajor => (self.rows, self.cols),
            Layout::ColMajor => (self.cols, self.rows),
        };
        let mut bytes = Vec::with_capacity(outer * inner * 8);
        for o in 0..outer {
            for v in &self.data[o * self.stride..o * self.stride + inner] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_amlt(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if &header[..4] != MAGIC {
            return Err(Error::Format("bad magic; expected `AMLT`".into()));
        }
        let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let layout = match header[12] {
            0 => Layout::RowMajor,
            1 => Layout::ColMajor,
            other => return Err(Error::Format(format!("unknown layout byte {other}"))),
        };
        let n = rows.checked_mul(cols).ok_or_else(|| Error::Format("dimensions overflow".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * 8 {
            return Err(Error::Format(format!("expected {} data bytes, found {}", n * 8, bytes.len())));
        }
        let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        let stride = match layout {
            Layout::RowMajor => cols,
            Layout::ColMajor => rows,
        };
        Ok(MatrixBuffer { rows, cols, layout, stride, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_amlt(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_amlt(std::io::BufReader::new(f))
    }
}

const MAGIC: &[u8; 4] = b"AMLT";
const HEADER_LEN: usize = 24;

/// Deterministic contents; values are drawn in row-major order so the
/// logical matrix does not depend on `layout`.
pub fn gen_matrix(seed: u64, rows: usize, cols: usize, layout: Layout, mode: DataMode) -> MatrixBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MatrixBuffer::zeros(rows, cols, layout);
    for r in 0..rows {
        for c in 0..cols {
            let v = match mode {
                DataMode::Int => rng.random_range(-8i32..=8) as f64,
                DataMode::Real => rng.random::<f64>(),
            };
            m.set(r, c, v);
        }
    }
    m
}

/// Per-operand seed: FNV-1a of the name mixed into the run seed.
pub fn seed_for(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

//! Datasets in the unit cube, the similarity map that put them there, and
//! their on-disk formats.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic    b"RTDS"
//! version  u32  (= 1)
//! dim      u32
//! n        u64
//! scale    f64
//! shift    dim x f64
//! points   n x dim x f64, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::MAX_DIM;

const MAGIC: &[u8; 4] = b"RTDS";
const VERSION: u32 = 1;

/// Relative margin kept below the upper cube face after normalization.
const FACE_MARGIN: f64 = 1.0 / (1u64 << 40) as f64;

/// Similarity transform `y = scale * x + shift` from raw coordinates into
/// the unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            scale: 1.0,
            shift: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.shift)
            .map(|(&v, &t)| self.scale * v + t)
            .collect()
    }

    pub fn invert(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.shift)
            .map(|(&v, &t)| (v - t) / self.scale)
            .collect()
    }
}

/// `n` points of `[0,1)^D`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    points: Vec<f64>,
    map: AffineMap,
}

impl Dataset {
    /// Validates that every coordinate lies in `[0,1)`.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        Self::with_map(dim, points, AffineMap::identity(dim))
    }

    pub fn with_map(dim: usize, points: Vec<f64>, map: AffineMap) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidConfig(format!(
                "dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        if !points.len().is_multiple_of(dim) {
            return Err(Error::Format(format!(
                "{} values do not form rows of length {dim}",
                points.len()
            )));
        }
        if map.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: map.dim(),
            });
        }
        for (index, row) in points.chunks_exact(dim).enumerate() {
            if let Some((axis, &value)) = row
                .iter()
                .enumerate()
                .find(|(_, x)| !(0.0..1.0).contains(*x))
            {
                return Err(Error::OutOfDomain { index, axis, value });
            }
        }
        Ok(Self { dim, points, map })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        if let Some(row) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn map(&self) -> &AffineMap {
        &self.map
    }

    /// Concatenates two datasets of equal dimension, keeping `self`'s map.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        Ok(Dataset {
            dim: self.dim,
            points,
            map: self.map.clone(),
        })
    }

    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.map.scale.to_le_bytes())?;
        for t in &self.map.shift {
            w.write_all(&t.to_le_bytes())?;
        }
        for x in &self.points {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Dataset> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad dataset magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {version}"
            )));
        }
        let dim = read_u32(&mut r)? as usize;
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Format(format!("bad dimension {dim}")));
        }
        let n = read_u64(&mut r)? as usize;
        let scale = read_f64(&mut r)?;
        let shift = (0..dim).map(|_| read_f64(&mut r)).collect::<Result<_>>()?;
        let len = n
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("point count overflows".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != len * 8 {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                len * 8,
                bytes.len()
            )));
        }
        let points = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Dataset::with_map(dim, points, AffineMap { scale, shift })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Dataset::read_binary(std::io::BufReader::new(file))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads comma-separated numeric rows. A first line that does not parse
/// as numbers is treated as a header and skipped.
pub fn read_csv_rows(r: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Format(format!("line {}: {e}", line + 1))),
        }
    }
    Ok(rows)
}

/// Maps raw points into `[0, 1)^D` with a single scale and a translation.
///
/// The scale is `min(1, (1 - margin) / diag)` where `diag` is the diagonal
/// of the bounding box, so the image has diameter at most one. The shift
/// moves each axis by the least amount that brings it inside the cube; data
/// already inside the cube with small enough diameter is left in place. A
/// single repeated point maps to the cube center.
pub fn normalize(rows: &[Vec<f64>]) -> Result<Dataset> {
    let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
    if let Some(row) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: row.len(),
        });
    }
    if let Some((index, axis, value)) = rows
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.iter().position(|v| !v.is_finite()).map(|a| (i, a, r[a])))
    {
        return Err(Error::OutOfDomain { index, axis, value });
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for row in rows {
        for k in 0..dim {
            lo[k] = lo[k].min(row[k]);
            hi[k] = hi[k].max(row[k]);
        }
    }
    let diag = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    let map = if diag == 0.0 {
        AffineMap {
            scale: 1.0,
            shift: lo.iter().map(|&x| 0.5 - x).collect(),
        }
    } else {
        let scale = (1.0f64).min((1.0 - FACE_MARGIN) / diag);
        let top = 1.0 - FACE_MARGIN;
        let shift = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| {
                let (a, b) = (scale * a, scale * b);
                if a < 0.0 {
                    -a
                } else if b > top {
                    top - b
                } else {
                    0.0
                }
            })
            .collect();
        AffineMap { scale, shift }
    };
    let mut points = Vec::with_capacity(rows.len() * dim);
    for row in rows {
        // Rounding in `scale * x + shift` may land a hair outside; clamp
        // into the half-open cube.
        points.extend(
            map.apply(row)
                .into_iter()
                .map(|y| y.clamp(0.0, 1.0 - f64::EPSILON)),
        );
    }
    Dataset::with_map(dim, points, map)
}

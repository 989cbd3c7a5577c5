//! Functions on `X × {t_k}`.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TGrid;
use crate::error::{invalid, Error, Result};

const MAGIC: &[u8; 8] = b"PLFIELD1";

/// Values `F(y, t_k)` stored t-major: `values[k·n + y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFunction {
    tgrid: TGrid,
    n: usize,
    values: Vec<C64>,
}

/// Sidecar written next to a saved field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub format: String,
    pub points: usize,
    pub scales: usize,
    pub tgrid: TGrid,
    pub sha256: String,
}

impl FieldFunction {
    pub fn new(tgrid: TGrid, n: usize, values: Vec<C64>) -> Result<FieldFunction> {
        if values.len() != n * tgrid.len() {
            return invalid(format!(
                "field has {} values, expected {} points × {} scales",
                values.len(),
                n,
                tgrid.len()
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return invalid("field values must be finite");
        }
        Ok(FieldFunction { tgrid, n, values })
    }

    pub fn zeros(tgrid: TGrid, n: usize) -> FieldFunction {
        FieldFunction {
            tgrid,
            n,
            values: vec![C64::new(0.0, 0.0); n * tgrid.len()],
        }
    }

    /// `F(y, t_k) = f(y, t_k, k)`.
    pub fn from_fn(tgrid: TGrid, n: usize, mut f: impl FnMut(usize, f64, usize) -> C64) -> Result<FieldFunction> {
        let nodes = tgrid.nodes();
        let mut values = Vec::with_capacity(n * nodes.len());
        for (k, &t) in nodes.iter().enumerate() {
            for y in 0..n {
                values.push(f(y, t, k));
            }
        }
        FieldFunction::new(tgrid, n, values)
    }

    /// One column per scale node.
    pub fn from_columns(tgrid: TGrid, cols: &[Vec<C64>]) -> Result<FieldFunction> {
        if cols.len() != tgrid.len() {
            return invalid(format!("{} columns for {} scales", cols.len(), tgrid.len()));
        }
        let n = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n) {
            return invalid("columns differ in length");
        }
        FieldFunction::new(tgrid, n, cols.concat())
    }

    pub fn tgrid(&self) -> &TGrid {
        &self.tgrid
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.tgrid.nodes()
    }

    pub fn points(&self) -> usize {
        self.n
    }

    pub fn scales(&self) -> usize {
        self.values.len() / self.n.max(1)
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn get(&self, y: usize, k: usize) -> C64 {
        self.values[k * self.n + y]
    }

    pub fn set(&mut self, y: usize, k: usize, v: C64) {
        self.values[k * self.n + y] = v;
    }

    /// `F(·, t_k)`.
    pub fn slice(&self, k: usize) -> &[C64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [C64] {
        &mut self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn abs_sq(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn scale(&self, c: C64) -> FieldFunction {
        FieldFunction {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Pointwise product on a common grid.
    pub fn mul(&self, other: &FieldFunction) -> Result<FieldFunction> {
        self.check_compatible(other)?;
        Ok(FieldFunction {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
            ..self.clone()
        })
    }

    /// `|F|` as a field.
    pub fn abs(&self) -> FieldFunction {
        FieldFunction {
            values: self.values.iter().map(|v| C64::new(v.norm(), 0.0)).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn check_compatible(&self, other: &FieldFunction) -> Result<()> {
        if self.n != other.n || self.tgrid != other.tgrid {
            return invalid("fields live on different grids");
        }
        Ok(())
    }

    fn bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(24 + 16 * self.values.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&(self.n as u64).to_le_bytes());
        b.extend_from_slice(&(self.scales() as u64).to_le_bytes());
        for v in &self.values {
            b.extend_from_slice(&v.re.to_le_bytes());
            b.extend_from_slice(&v.im.to_le_bytes());
        }
        b
    }

    fn sidecar(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// Writes the binary block to `path` and its descriptor to `path.json`.
    pub fn save(&self, path: &Path) -> Result<FieldDescriptor> {
        let bytes = self.bytes();
        let desc = FieldDescriptor {
            format: "PLFIELD1".into(),
            points: self.n,
            scales: self.scales(),
            tgrid: self.tgrid,
            sha256: hex(&Sha256::digest(&bytes)),
        };
        fs::write(path, &bytes)?;
        fs::write(Self::sidecar(path), serde_json::to_string_pretty(&desc)?)?;
        Ok(desc)
    }

    pub fn load(path: &Path) -> Result<FieldFunction> {
        let desc: FieldDescriptor = serde_json::from_str(&fs::read_to_string(Self::sidecar(path))?)?;
        let bytes = fs::read(path)?;
        if hex(&Sha256::digest(&bytes)) != desc.sha256 {
            return Err(Error::InvalidArgument("field checksum mismatch".into()));
        }
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return invalid("not a field block");
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
        let (n, k) = (word(0), word(1));
        if n != desc.points || k != desc.scales || bytes.len() != 24 + 16 * n * k {
            return invalid("field block size disagrees with its descriptor");
        }
        let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let values = (0..n * k).map(|i| C64::new(f(24 + 16 * i), f(32 + 16 * i))).collect();
        FieldFunction::new(desc.tgrid, n, values)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

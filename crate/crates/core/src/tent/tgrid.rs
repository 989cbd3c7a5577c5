//! Log-uniform scale grids.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::operator::SectorialOperator;

/// Nodes `t_k = δ·2^{k/q}`, `k = 0..=K`, with `t_K ≤ R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TGrid {
    pub delta: f64,
    pub r: f64,
    pub q: u32,
}

impl TGrid {
    pub fn new(delta: f64, r: f64, q: u32) -> Result<TGrid> {
        if !(delta > 0.0) || !(r >= delta) || !r.is_finite() || q == 0 {
            return invalid(format!("bad scale grid delta={delta} r={r} q={q}"));
        }
        Ok(TGrid { delta, r, q })
    }

    /// Grid whose nodes satisfy `t^{2m}·λ ∈ [lo, hi]` for every spectral
    /// magnitude of `op`, using its spectral bounds.
    pub fn covering(op: &SectorialOperator, lo: f64, hi: f64, q: u32) -> Result<TGrid> {
        let (lmin, lmax) = op.spectral_bounds()?;
        let e = 1.0 / op.order_2m() as f64;
        TGrid::new((lo / lmax).powf(e), (hi / lmin).powf(e), q)
    }

    /// Covering grid for `t^{2m}λ ∈ [1e-3, 1e3]` at 16 nodes per octave.
    pub fn default_for(op: &SectorialOperator) -> Result<TGrid> {
        TGrid::covering(op, 1e-3, 1e3, 16)
    }

    pub fn len(&self) -> usize {
        let k = (self.q as f64 * (self.r / self.delta).log2() + 1e-9).floor();
        k as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.delta * (k as f64 / self.q as f64).exp2())
            .collect()
    }

    /// Quadrature step `ln 2 / q` in `ln t`.
    pub fn dlog(&self) -> f64 {
        std::f64::consts::LN_2 / self.q as f64
    }

    /// Doubles the number of nodes per octave.
    pub fn refine(&self) -> TGrid {
        TGrid { q: self.q * 2, ..*self }
    }

    /// Extends the range by `factor` on both ends.
    pub fn widen(&self, factor: f64) -> TGrid {
        TGrid {
            delta: self.delta / factor,
            r: self.r * factor,
            q: self.q,
        }
    }
}

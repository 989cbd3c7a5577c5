//! Semigroup paraproducts `Π(f, g)` built from a pair of symbols and ball
//! averages, with their adjoints and the fractional Leibniz rule.

mod measure;
mod probes;

#[cfg(test)]
mod tests;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub use measure::*;
pub use probes::{bounded_probes, gaussian_probes, structured_probes};

use crate::calculus::{normalize_pair, semigroup_symbol, time_scale, Calculus, PsiFunction};
use crate::error::{invalid, Result};
use crate::hardy::critical_order;
use crate::linalg::mat_from_col;
use crate::operator::SectorialOperator;
use crate::tent::TGrid;

/// `Π(f, g) = Σ_k 2mΔ ψ̃(t_k^{2m}L)[ψ(t_k^{2m}L)g · A_{t_k} e^{-t_k^{2m}L} f]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParaproductSpec {
    pub psi: PsiFunction,
    pub psi_tilde: PsiFunction,
    pub tgrid: TGrid,
    /// Whether `A_t` is applied; off gives the convolution-style variant.
    pub averaging: bool,
    /// Hypotheses of the boundedness results that the symbols miss.
    pub warnings: Vec<String>,
}

impl ParaproductSpec {
    pub fn new(op: &SectorialOperator, psi: PsiFunction, psi_tilde: PsiFunction, tgrid: TGrid) -> ParaproductSpec {
        let k = critical_order(op);
        let mut warnings = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                warnings.push(msg);
            }
        };
        need(
            psi.alpha() > k,
            format!("L2: psi vanishing order {} <= n/4m = {k}", psi.alpha()),
        );
        need(
            psi_tilde.beta() > k,
            format!("Lp: psi_tilde decay {} <= n/4m = {k}", psi_tilde.beta()),
        );
        need(
            psi_tilde.alpha() > k,
            format!("Hp: psi_tilde vanishing order {} <= n/4m = {k}", psi_tilde.alpha()),
        );
        ParaproductSpec {
            psi,
            psi_tilde,
            tgrid,
            averaging: true,
            warnings,
        }
    }

    /// Scales `ψ̃` so that `∫ ψ ψ̃ ds/s = 1`.
    pub fn normalized(
        op: &SectorialOperator,
        psi: PsiFunction,
        psi_tilde: PsiFunction,
        tgrid: TGrid,
    ) -> Result<ParaproductSpec> {
        let (pt, _) = normalize_pair(&psi, &psi_tilde)?;
        Ok(ParaproductSpec::new(op, psi, pt, tgrid))
    }

    pub fn without_averaging(mut self) -> ParaproductSpec {
        self.averaging = false;
        self
    }

    pub fn with_tgrid(&self, tgrid: TGrid) -> ParaproductSpec {
        ParaproductSpec { tgrid, ..self.clone() }
    }

    fn scales(&self, op: &SectorialOperator) -> Vec<f64> {
        self.tgrid.nodes().iter().map(|&t| time_scale(op, t)).collect()
    }

    fn weights(&self, op: &SectorialOperator) -> Vec<C64> {
        let w = C64::new(op.order_2m() as f64 * self.tgrid.dlog(), 0.0);
        vec![w; self.tgrid.len()]
    }
}

fn columns(a: &Mat<C64>, b: &Mat<C64>) -> Result<usize> {
    match (a.ncols(), b.ncols()) {
        (x, y) if x == y => Ok(x),
        (1, y) => Ok(y),
        (x, 1) => Ok(x),
        (x, y) => invalid(format!("column counts {x} and {y} do not broadcast")),
    }
}

fn col(m: &Mat<C64>, j: usize) -> &[C64] {
    m.col_as_slice(if m.ncols() == 1 { 0 } else { j })
}

/// Entrywise product of column-broadcast blocks, optionally conjugating `a`.
fn hadamard(a: &Mat<C64>, b: &Mat<C64>, conj_a: bool) -> Result<Mat<C64>> {
    let c = columns(a, b)?;
    let mut out = Mat::<C64>::zeros(a.nrows(), c);
    for j in 0..c {
        let (x, y) = (col(a, j), col(b, j));
        for (o, (p, q)) in out.col_as_slice_mut(j).iter_mut().zip(x.iter().zip(y)) {
            *o = if conj_a { p.conj() * q } else { p * q };
        }
    }
    Ok(out)
}

fn average_cols(op: &SectorialOperator, t: f64, m: &Mat<C64>, adjoint: bool, on: bool) -> Mat<C64> {
    if !on {
        return m.clone();
    }
    let space = op.space();
    let mut out = Mat::<C64>::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        let v = if adjoint {
            space.average_adjoint(t, m.col_as_slice(j))
        } else {
            space.average(t, m.col_as_slice(j))
        };
        out.col_as_slice_mut(j).copy_from_slice(&v);
    }
    out
}

fn check_rows(op: &SectorialOperator, m: &Mat<C64>) -> Result<()> {
    if m.nrows() != op.len() || m.ncols() == 0 {
        return invalid(format!(
            "block of shape {}×{} for {} points",
            m.nrows(),
            m.ncols(),
            op.len()
        ));
    }
    Ok(())
}

/// `A_{t_k} e^{-t_k^{2m}L} f` on every node, column by column.
pub fn averaged_semigroup(calc: &dyn Calculus, spec: &ParaproductSpec, f: &Mat<C64>) -> Result<Vec<Mat<C64>>> {
    let op = calc.operator();
    check_rows(op, f)?;
    let prep = calc.prepare(&semigroup_symbol(), f, false)?;
    spec.tgrid
        .nodes()
        .iter()
        .map(|&t| Ok(average_cols(op, t, &prep.at(time_scale(op, t))?, false, spec.averaging)))
        .collect()
}

/// `Π(f, g)` for column blocks; a single column broadcasts against many.
pub fn paraproduct_batch(calc: &dyn Calculus, spec: &ParaproductSpec, f: &Mat<C64>, g: &Mat<C64>) -> Result<Mat<C64>> {
    let op = calc.operator();
    check_rows(op, g)?;
    columns(f, g)?;
    let avg = averaged_semigroup(calc, spec, f)?;
    let scales = spec.scales(op);
    let pg = calc.prepare(&spec.psi, g, false)?;
    calc.apply_sum(&spec.psi_tilde, &scales, &spec.weights(op), false, &mut |k| {
        hadamard(&pg.at(scales[k])?, &avg[k], false)
    })
}

/// `Π(f, g)`.
pub fn paraproduct(calc: &dyn Calculus, spec: &ParaproductSpec, f: &[C64], g: &[C64]) -> Result<Vec<C64>> {
    let r = paraproduct_batch(calc, spec, &mat_from_col(f), &mat_from_col(g))?;
    Ok(r.col_as_slice(0).to_vec())
}

/// `Π_b f = Π(f, b)`.
pub fn paraproduct_apply(calc: &dyn Calculus, spec: &ParaproductSpec, b: &[C64], f: &[C64]) -> Result<Vec<C64>> {
    paraproduct(calc, spec, f, b)
}

/// `Π*_b g = Σ_k 2mΔ e^{-t_k^{2m}L*} A*_{t_k}[conj(ψ(t_k^{2m}L)b) · ψ̃(t_k^{2m}L*)g]`.
pub fn paraproduct_adjoint_batch(
    calc: &dyn Calculus,
    spec: &ParaproductSpec,
    b: &Mat<C64>,
    g: &Mat<C64>,
) -> Result<Mat<C64>> {
    let op = calc.operator();
    check_rows(op, b)?;
    check_rows(op, g)?;
    columns(b, g)?;
    let scales = spec.scales(op);
    let nodes = spec.tgrid.nodes();
    let pb = calc.prepare(&spec.psi, b, false)?;
    let pg = calc.prepare(&spec.psi_tilde, g, true)?;
    calc.apply_sum(&semigroup_symbol(), &scales, &spec.weights(op), true, &mut |k| {
        let inner = hadamard(&pb.at(scales[k])?, &pg.at(scales[k])?, true)?;
        Ok(average_cols(op, nodes[k], &inner, true, spec.averaging))
    })
}

pub fn paraproduct_adjoint_apply(
    calc: &dyn Calculus,
    spec: &ParaproductSpec,
    b: &[C64],
    g: &[C64],
) -> Result<Vec<C64>> {
    let r = paraproduct_adjoint_batch(calc, spec, &mat_from_col(b), &mat_from_col(g))?;
    Ok(r.col_as_slice(0).to_vec())
}

/// Dual of `Π(f, ·)`: `Σ_k 2mΔ ψ(t_k^{2m}L*)[conj(A_{t_k}e^{-t_k^{2m}L}f) · ψ̃(t_k^{2m}L*)h]`.
pub fn paraproduct_dual(calc: &dyn Calculus, spec: &ParaproductSpec, f: &[C64], h: &[C64]) -> Result<Vec<C64>> {
    let op = calc.operator();
    let fm = mat_from_col(f);
    let hm = mat_from_col(h);
    check_rows(op, &hm)?;
    let avg = averaged_semigroup(calc, spec, &fm)?;
    let scales = spec.scales(op);
    let ph = calc.prepare(&spec.psi_tilde, &hm, true)?;
    let r = calc.apply_sum(&spec.psi, &scales, &spec.weights(op), true, &mut |k| {
        hadamard(&avg[k], &ph.at(scales[k])?, true)
    })?;
    Ok(r.col_as_slice(0).to_vec())
}

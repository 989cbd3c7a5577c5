//! Boundedness, identity, off-diagonal and Leibniz measurements.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{
    averaged_semigroup, bounded_probes, gaussian_probes, paraproduct_adjoint_batch, paraproduct_batch,
    structured_probes, ParaproductSpec,
};
use crate::calculus::{
    calderon_reconstruct, exp_monomial, measure_offdiag, time_scale, Calculus, OffdiagReport, PsiFunction,
};
use crate::error::{invalid, Error, Result};
use crate::hardy::{bmo_norm, critical_order, hardy_norm, BallFamily, Molecule};
use crate::linalg::{mat_from_col, norm2, norm_inf, norm_p, sub};

/// `⌊n/4m⌋ + 1`, the smallest integer above the critical order.
pub fn bmo_order(calc: &dyn Calculus) -> u32 {
    critical_order(calc.operator()).floor() as u32 + 1
}

/// `‖b‖_BMO` on the ball family of the `ParaproductSpec`, or `‖b‖_∞` when it vanishes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmoScale {
    pub bmo: f64,
    pub sup: f64,
    pub fallback: bool,
}

impl BmoScale {
    pub fn value(&self) -> f64 {
        if self.fallback {
            self.sup
        } else {
            self.bmo
        }
    }
}

pub fn bmo_scale(calc: &dyn Calculus, spec: &ParaproductSpec, b: &[C64]) -> Result<BmoScale> {
    let space = calc.operator().space();
    let bmo = bmo_norm(calc, b, bmo_order(calc), &BallFamily::for_tgrid(space, &spec.tgrid))?;
    let sup = norm_inf(b);
    Ok(BmoScale {
        bmo,
        sup,
        fallback: !(bmo > 1e-12 * sup),
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn hstack(a: Mat<C64>, b: Mat<C64>) -> Mat<C64> {
    let (ca, cb) = (a.ncols(), b.ncols());
    Mat::from_fn(
        a.nrows(),
        ca + cb,
        |i, j| {
            if j < ca {
                a[(i, j)]
            } else {
                b[(i, j - ca)]
            }
        },
    )
}

/// Output of [`measure_para_l2`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParaL2Report {
    /// `sup ‖Π_b f‖₂ / (‖b‖_BMO ‖f‖₂)`.
    pub sup: f64,
    /// The same with `‖b‖_∞` in the denominator.
    pub sup_inf: f64,
    pub scale: BmoScale,
    pub ratios: Vec<f64>,
}

/// Random Gaussian and structured probes `f` against a fixed `b`.
pub fn measure_para_l2(
    calc: &dyn Calculus,
    spec: &ParaproductSpec,
    b: &[C64],
    trials: usize,
    seed: u64,
) -> Result<ParaL2Report> {
    let op = calc.operator();
    let w = op.weights();
    let scale = bmo_scale(calc, spec, b)?;
    let f = hstack(gaussian_probes(op.len(), trials, seed), structured_probes(op.space()));
    let p = paraproduct_batch(calc, spec, &f, &mat_from_col(b))?;
    let mut ratios = Vec::with_capacity(f.ncols());
    let mut sup_inf = 0.0f64;
    for j in 0..f.ncols() {
        let (num, nf) = (norm2(w, p.col_as_slice(j)), norm2(w, f.col_as_slice(j)));
        ratios.push(ratio(num, scale.value() * nf));
        sup_inf = sup_inf.max(ratio(num, scale.sup * nf));
    }
    Ok(ParaL2Report {
        sup: ratios.iter().copied().fold(0.0, f64::max),
        sup_inf,
        scale,
        ratios,
    })
}

/// Output of [`measure_para_lp_hp`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParaLpReport {
    pub p: f64,
    pub sup: f64,
    pub scale: BmoScale,
    pub ratios: Vec<f64>,
}

/// Symbol with vanishing order above `n/4m`, admissible for every `p > 2`.
pub fn admissible_hardy_symbol(calc: &dyn Calculus) -> Result<PsiFunction> {
    exp_monomial(bmo_order(calc) as f64)
}

/// `sup ‖Π_b f‖_{H^p} / (‖b‖_BMO ‖f‖_p)` for `2 < p < ∞`, with the BMO norm
/// of `Π_b f` in place of the Hardy norm at `p = ∞`.
pub fn measure_para_lp_hp(
    calc: &dyn Calculus,
    spec: &ParaproductSpec,
    b: &[C64],
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<ParaLpReport> {
    if !(p > 2.0) {
        return invalid(format!("exponent {p} must exceed 2"));
    }
    let op = calc.operator();
    let w = op.weights();
    let scale = bmo_scale(calc, spec, b)?;
    let mut f = hstack(bounded_probes(op.len(), trials, seed), structured_probes(op.space()));
    if p.is_infinite() {
        f = hstack(f, Mat::from_fn(op.len(), 1, |_, _| C64::new(1.0, 0.0)));
    }
    let out = paraproduct_batch(calc, spec, &f, &mat_from_col(b))?;
    let psi = admissible_hardy_symbol(calc)?;
    let balls = BallFamily::for_tgrid(op.space(), &spec.tgrid);
    let mut ratios = Vec::with_capacity(f.ncols());
    for j in 0..f.ncols() {
        let v = out.col_as_slice(j);
        let fj = f.col_as_slice(j);
        let num = if p.is_infinite() {
            bmo_norm(calc, v, bmo_order(calc), &balls)?
        } else {
            hardy_norm(calc, v, p, &psi, &spec.tgrid)?.value
        };
        ratios.push(ratio(num, scale.value() * norm_p(w, fj, p)));
    }
    Ok(ParaLpReport {
        p,
        sup: ratios.iter().copied().fold(0.0, f64::max),
        scale,
        ratios,
    })
}

/// Output of [`measure_para_hp_l1`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParaHpReport {
    /// `sup_m ‖Π(f, m)‖₁ / ‖f‖_∞`.
    pub sup: f64,
    pub ratios: Vec<f64>,
}

pub fn measure_para_hp_l1(
    calc: &dyn Calculus,
    spec: &ParaproductSpec,
    f: &[C64],
    molecules: &[Molecule],
) -> Result<ParaHpReport> {
    if molecules.is_empty() {
        return Err(Error::EmptyMolecules);
    }
    let op = calc.operator();
    let n = op.len();
    if molecules.iter().any(|m| m.m.len() != n) || f.len() != n {
        return invalid("molecule or function length differs from the operator");
    }
    let g = Mat::from_fn(n, molecules.len(), |i, j| molecules[j].m[i]);
    let out = paraproduct_batch(calc, spec, &mat_from_col(f), &g)?;
    let fi = norm_inf(f);
    let ratios: Vec<f64> = (0..g.ncols())
        .map(|j| ratio(norm_p(op.weights(), out.col_as_slice(j), 1.0), fi))
        .collect();
    Ok(ParaHpReport {
        sup: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
    })
}

/// Output of [`para_offdiag`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParaOffdiagReport {
    pub fit: OffdiagReport,
    /// `min(β₁, α₂)`: vanishing orders of `ψ` and `ψ̃` at zero.
    pub admissible: f64,
    /// `min(β₂, δ)`: decay of `ψ̃` at infinity and vanishing order of `φ`.
    pub ceiling: f64,
}

/// `‖1_F φ(t^{2m}L) Π(f, 1_E g)‖₂ / (‖f‖_∞ ‖g‖₂)` across `ts`, fitted.
pub fn para_offdiag(
    calc: &dyn Calculus,
    spec: &ParaproductSpec,
    f: &[C64],
    e: &[usize],
    fset: &[usize],
    phi: &PsiFunction,
    ts: &[f64],
) -> Result<ParaOffdiagReport> {
    let op = calc.operator();
    let space = op.space();
    let n = op.len();
    if f.len() != n || e.is_empty() || e.iter().any(|&x| x >= n) {
        return invalid("bad function or set for the off-diagonal measurement");
    }
    let fi = norm_inf(f);
    if fi == 0.0 {
        return invalid("f vanishes");
    }
    let w = space.weights();
    let basis = Mat::<C64>::from_fn(n, e.len(), |i, j| {
        if i == e[j] {
            C64::new(1.0 / w[i].sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let pi = paraproduct_batch(calc, spec, &mat_from_col(f), &basis)? * faer::Scale(C64::new(1.0 / fi, 0.0));
    let prep = calc.prepare(phi, &pi, false)?;
    let family = |t: f64, _: &Mat<C64>| prep.at(time_scale(op, t));
    let fit = measure_offdiag(space, op.order_2m(), &family, e, fset, ts)?;
    if fit.saturated {
        return Err(Error::Unsupported(
            "off-diagonal decay saturated below round-off".into(),
        ));
    }
    Ok(ParaOffdiagReport {
        fit,
        admissible: spec.psi.alpha().min(spec.psi_tilde.alpha()),
        ceiling: spec.psi_tilde.beta().min(phi.alpha()),
    })
}

/// Output of [`leibniz_check`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LeibnizReport {
    pub s: f64,
    /// `‖L^γ Π(f,g) − Π_s(f, L^γ g)‖₂ / ‖Π_s(f, L^γ g)‖₂`, `γ = s/2m`.
    pub residual: f64,
    /// `‖L^γ Π(f,g)‖₂ / (‖f‖_∞ ‖L^γ g‖₂)`.
    pub norm_ratio: f64,
}

/// Compares `L^{s/2m} Π(f, g)` with the paraproduct of the shifted symbols
/// `z^{s/2m}ψ̃`, `z^{-s/2m}ψ` applied to `(f, L^{s/2m} g)` on the same grid.
pub fn leibniz_check(
    calc: &dyn Calculus,
    spec: &ParaproductSpec,
    s: f64,
    f: &[C64],
    g: &[C64],
) -> Result<LeibnizReport> {
    let op = calc.operator();
    let two_m = op.order_2m() as f64;
    if !(s >= 0.0 && s < two_m) {
        return invalid(format!("order {s} must lie in [0, {two_m})"));
    }
    let gamma = s / two_m;
    if !(spec.psi.alpha() > gamma) {
        return Err(Error::Hypothesis(format!(
            "psi vanishing order {} must exceed s/2m = {gamma}",
            spec.psi.alpha()
        )));
    }
    if !(spec.psi_tilde.beta() > gamma) {
        return Err(Error::Hypothesis(format!(
            "psi_tilde decay {} must exceed s/2m = {gamma}",
            spec.psi_tilde.beta()
        )));
    }
    let w = op.weights();
    let (fm, gm) = (mat_from_col(f), mat_from_col(g));
    let plain = paraproduct_batch(calc, spec, &fm, &gm)?;
    let (lhs, lg, rhs) = if gamma == 0.0 {
        (plain.clone(), gm, plain)
    } else {
        let shifted = ParaproductSpec {
            psi: spec.psi.zpow(-gamma)?,
            psi_tilde: spec.psi_tilde.zpow(gamma)?,
            ..spec.clone()
        };
        let lg = calc.fractional_power(gamma, &gm, false)?;
        let rhs = paraproduct_batch(calc, &shifted, &fm, &lg)?;
        (calc.fractional_power(gamma, &plain, false)?, lg, rhs)
    };
    let (l, r) = (lhs.col_as_slice(0), rhs.col_as_slice(0));
    let nr = norm2(w, r);
    Ok(LeibnizReport {
        s,
        residual: if nr > 0.0 {
            norm2(w, &sub(l, r)) / nr
        } else {
            norm2(w, l)
        },
        norm_ratio: ratio(norm2(w, l), norm_inf(f) * norm2(w, lg.col_as_slice(0))),
    })
}

/// Output of [`measure_para_linf_l2`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinfL2Report {
    /// `sup ‖Π(f,g)‖₂ / (‖f‖_∞ ‖g‖₂)`.
    pub sup: f64,
    pub ratios: Vec<f64>,
}

pub fn measure_para_linf_l2(
    calc: &dyn Calculus,
    spec: &ParaproductSpec,
    trials: usize,
    seed: u64,
) -> Result<LinfL2Report> {
    let op = calc.operator();
    let w = op.weights();
    let f = bounded_probes(op.len(), trials, seed);
    let g = gaussian_probes(op.len(), trials, seed.wrapping_add(1));
    let out = paraproduct_batch(calc, spec, &f, &g)?;
    let ratios: Vec<f64> = (0..trials)
        .map(|j| {
            ratio(
                norm2(w, out.col_as_slice(j)),
                norm_inf(f.col_as_slice(j)) * norm2(w, g.col_as_slice(j)),
            )
        })
        .collect();
    Ok(LinfL2Report {
        sup: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
    })
}

/// `max_k ‖A_{t_k} e^{-t_k^{2m}L} f‖_∞ / ‖f‖_∞`.
pub fn average_semigroup_linf(calc: &dyn Calculus, spec: &ParaproductSpec, f: &[C64]) -> Result<f64> {
    let fi = norm_inf(f);
    let avg = averaged_semigroup(calc, spec, &mat_from_col(f))?;
    Ok(avg
        .iter()
        .map(|a| ratio(norm_inf(a.col_as_slice(0)), fi))
        .fold(0.0, f64::max))
}

/// Output of [`para_identity`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ParaIdentityReport {
    /// `‖Π_b(1) − Pb‖₂`.
    pub residual: f64,
    /// Calderón residual plus the conservation contribution plus a
    /// round-off floor.
    pub budget: f64,
    pub calderon: f64,
    pub conservation: f64,
    /// `‖Π*_b(1)‖₂`.
    pub adjoint: f64,
    pub b_sup: f64,
}

/// `Π_b(1) = Pb` and `Π*_b(1) = 0` on the scale grid of the `ParaproductSpec`.
pub fn para_identity(calc: &dyn Calculus, spec: &ParaproductSpec, b: &[C64]) -> Result<ParaIdentityReport> {
    let op = calc.operator();
    let w = op.weights();
    let n = op.len();
    let one = vec![C64::new(1.0, 0.0); n];
    let pi1 = paraproduct_batch(calc, spec, &mat_from_col(&one), &mat_from_col(b))?;
    let pb = op.project_range(b);
    let residual = norm2(w, &sub(pi1.col_as_slice(0), &pb));
    let cal = calderon_reconstruct(calc, &spec.psi, &spec.psi_tilde, b, &spec.tgrid)?;
    let calderon = norm2(w, &sub(&cal.result, &pb));
    // Σ_k 2mΔ ‖ψ(s_kL)b‖₂ ‖A_t e^{-s_kL}1 − 1‖_∞ sup|ψ̃|
    let avg = averaged_semigroup(calc, spec, &mat_from_col(&one))?;
    let pb_prep = calc.prepare(&spec.psi, &mat_from_col(b), false)?;
    let sup_tilde = (-400..=400)
        .map(|k| spec.psi_tilde.eval_real((k as f64 * 0.05).exp()).abs())
        .fold(0.0, f64::max);
    let weight = op.order_2m() as f64 * spec.tgrid.dlog();
    let mut conservation = 0.0;
    for (k, t) in spec.tgrid.nodes().into_iter().enumerate() {
        let drift = avg[k]
            .col_as_slice(0)
            .iter()
            .fold(0.0f64, |m, v| m.max((v - 1.0).norm()));
        let pk = pb_prep.at(time_scale(op, t))?;
        conservation += weight * norm2(w, pk.col_as_slice(0)) * drift * sup_tilde;
    }
    let adj = paraproduct_adjoint_batch(calc, spec, &mat_from_col(b), &mat_from_col(&one))?;
    Ok(ParaIdentityReport {
        residual,
        budget: calderon + conservation + 1e-12 * norm2(w, b),
        calderon,
        conservation,
        adjoint: norm2(w, adj.col_as_slice(0)),
        b_sup: norm_inf(b),
    })
}

//! Holomorphic functional calculus, square functions, reproducing
//! formulas and off-diagonal measurements.

pub mod contour;
pub mod psi;
pub mod spectral;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

pub use contour::ContourCalculus;
pub use psi::{
    exp_monomial, exp_monomial_power, one_minus_exp, psi_make, rational, semigroup_symbol, DecayReport, PsiFamily,
    PsiForm, PsiFunction, EXP_SENTINEL,
};
pub use spectral::SpectralCalculus;

use crate::error::{invalid, Error, Result};
use crate::linalg::{linear_fit, mat_from_col, norm2, pq_norm, sub};
use crate::operator::SectorialOperator;
use crate::space::{Ball, MetricMeasureSpace};
pub use crate::tent::TGrid;

/// Which evaluation path a [`Calculus`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Contour,
    Spectral,
}

/// Evaluation of `φ(sL)` on blocks of column vectors.
///
/// `adjoint = true` evaluates `φ(sL*)`; for the real-coefficient symbols
/// of this crate that is `φ(sL)*`.
pub trait Calculus: Send + Sync {
    fn operator(&self) -> &SectorialOperator;

    fn engine(&self) -> Engine;

    /// Fixes `φ` and the input block so that many scales can be evaluated.
    fn prepare(&self, phi: &PsiFunction, f: &Mat<C64>, adjoint: bool) -> Result<Box<dyn Prepared + '_>>;

    /// `Σ_k w_k φ(s_k L) T_k` with `T_k = terms(k)`.
    fn apply_sum(
        &self,
        phi: &PsiFunction,
        scales: &[f64],
        weights: &[C64],
        adjoint: bool,
        terms: &mut dyn FnMut(usize) -> Result<Mat<C64>>,
    ) -> Result<Mat<C64>>;

    /// `L^γ F` (kernel components are sent to zero).
    fn fractional_power(&self, gamma: f64, f: &Mat<C64>, adjoint: bool) -> Result<Mat<C64>>;

    fn apply(&self, phi: &PsiFunction, s: f64, f: &Mat<C64>, adjoint: bool) -> Result<Mat<C64>> {
        self.prepare(phi, f, adjoint)?.at(s)
    }
}

/// A symbol and input block bound together.
pub trait Prepared {
    fn at(&self, s: f64) -> Result<Mat<C64>>;
}

/// Builds a calculus for `op`.
pub fn make_calculus(op: &SectorialOperator, engine: Engine) -> Result<Box<dyn Calculus>> {
    Ok(match engine {
        Engine::Contour => Box::new(ContourCalculus::new(op)),
        Engine::Spectral => Box::new(SpectralCalculus::new(op)?),
    })
}

pub(crate) fn check_symbol(op: &SectorialOperator, phi: &PsiFunction) -> Result<()> {
    if !phi.is_bounded() {
        return Err(Error::Hypothesis(format!("symbol {phi} is unbounded")));
    }
    if !(phi.sigma() > op.sector_angle()) {
        return Err(Error::Hypothesis(format!(
            "symbol angle {:.4} does not exceed the sector angle {:.4}",
            phi.sigma(),
            op.sector_angle()
        )));
    }
    Ok(())
}

fn check_len(op: &SectorialOperator, f: &[C64]) -> Result<()> {
    if f.len() != op.len() {
        return invalid(format!("vector length {} != {}", f.len(), op.len()));
    }
    Ok(())
}

/// `t^{2m}`.
pub fn time_scale(op: &SectorialOperator, t: f64) -> f64 {
    t.powi(op.order_2m() as i32)
}

/// `ψ(t^{2m}L) f`.
pub fn apply_psi(calc: &dyn Calculus, psi: &PsiFunction, t: f64, f: &[C64]) -> Result<Vec<C64>> {
    apply_psi_with(calc, psi, t, f, false)
}

/// `ψ(t^{2m}L*) f`.
pub fn apply_psi_adjoint(calc: &dyn Calculus, psi: &PsiFunction, t: f64, f: &[C64]) -> Result<Vec<C64>> {
    apply_psi_with(calc, psi, t, f, true)
}

fn apply_psi_with(calc: &dyn Calculus, psi: &PsiFunction, t: f64, f: &[C64], adjoint: bool) -> Result<Vec<C64>> {
    let op = calc.operator();
    check_len(op, f)?;
    if !(t > 0.0) {
        return invalid(format!("scale {t} must be positive"));
    }
    let r = calc.apply(psi, time_scale(op, t), &mat_from_col(f), adjoint)?;
    Ok(r.col_as_slice(0).to_vec())
}

/// `e^{-tL} f`.
pub fn apply_semigroup(calc: &dyn Calculus, t: f64, f: &[C64]) -> Result<Vec<C64>> {
    check_len(calc.operator(), f)?;
    if t == 0.0 {
        return Ok(f.to_vec());
    }
    if !(t > 0.0) {
        return invalid(format!("time {t} must be nonnegative"));
    }
    let r = calc.apply(&semigroup_symbol(), t, &mat_from_col(f), false)?;
    Ok(r.col_as_slice(0).to_vec())
}

/// `L^{s/2m} f`.
pub fn apply_fractional_power(calc: &dyn Calculus, s: f64, f: &[C64]) -> Result<Vec<C64>> {
    let op = calc.operator();
    check_len(op, f)?;
    let r = calc.fractional_power(s / op.order_2m() as f64, &mat_from_col(f), false)?;
    Ok(r.col_as_slice(0).to_vec())
}

/// `(Σ_k ‖ψ(t_k L) f‖² Δ)^{1/2}` over the grid nodes, `Δ = ln 2 / q`.
pub fn quadratic_norm(calc: &dyn Calculus, psi: &PsiFunction, f: &[C64], tgrid: &TGrid) -> Result<f64> {
    check_len(calc.operator(), f)?;
    Ok(quadratic_norms(calc, psi, &mat_from_col(f), tgrid)?[0])
}

/// [`quadratic_norm`] for every column of `f`.
pub fn quadratic_norms(calc: &dyn Calculus, psi: &PsiFunction, f: &Mat<C64>, tgrid: &TGrid) -> Result<Vec<f64>> {
    let w = calc.operator().weights();
    let prep = calc.prepare(psi, f, false)?;
    let mut acc = vec![0.0; f.ncols()];
    for t in tgrid.nodes() {
        let g = prep.at(t)?;
        for (j, a) in acc.iter_mut().enumerate() {
            let n = norm2(w, g.col_as_slice(j));
            *a += n * n;
        }
    }
    Ok(acc.into_iter().map(|a| (a * tgrid.dlog()).sqrt()).collect())
}

/// `∫_0^∞ ψ(t) ψ̃(t) dt/t` by trapezoidal quadrature in `ln t`.
pub fn pairing_integral(psi: &PsiFunction, psi_tilde: &PsiFunction) -> Result<f64> {
    if !(psi.alpha() + psi_tilde.alpha() > 0.0) || !(psi.beta() + psi_tilde.beta() > 0.0) {
        return invalid("pairing integrand does not decay at both ends");
    }
    let g = |u: f64| -> C64 {
        let x = C64::new(u.exp(), 0.0);
        psi.eval(x) * psi_tilde.eval(x)
    };
    let scan: Vec<(f64, f64)> = (-2800..=2800)
        .map(|k| k as f64 * 0.25)
        .map(|u| (u, g(u).norm()))
        .collect();
    let peak = scan.iter().fold(0.0f64, |m, p| m.max(p.1));
    if peak == 0.0 {
        return Err(Error::VanishingPairing(0.0));
    }
    let live: Vec<f64> = scan.iter().filter(|p| p.1 > 1e-22 * peak).map(|p| p.0).collect();
    let (a, b) = (live[0] - 1.0, live[live.len() - 1] + 1.0);
    let trap = |n: usize| -> C64 {
        let h = (b - a) / n as f64;
        let mut s = (g(a) + g(b)) * 0.5;
        for k in 1..n {
            s += g(a + k as f64 * h);
        }
        s * h
    };
    let mut n = (4.0 * (b - a)).ceil() as usize;
    let mut prev = trap(n);
    let mut val = prev;
    for _ in 0..8 {
        n *= 2;
        val = trap(n);
        if (val - prev).norm() <= 1e-15 * val.norm() {
            break;
        }
        prev = val;
    }
    if val.im.abs() > 1e-12 * val.norm() {
        return Err(Error::Unsupported("pairing integral is not real".into()));
    }
    Ok(val.re)
}

/// Rescales `ψ̃` so that `∫_0^∞ ψ(t)ψ̃(t) dt/t = 1`; returns the rescaled
/// symbol and the factor.
pub fn normalize_pair(psi: &PsiFunction, psi_tilde: &PsiFunction) -> Result<(PsiFunction, f64)> {
    let i = pairing_integral(psi, psi_tilde)?;
    if !(i.abs() > 1e-300) {
        return Err(Error::VanishingPairing(i));
    }
    let c = 1.0 / i;
    let out = psi_tilde.scale(c)?;
    let check = pairing_integral(psi, &out)?;
    if (check - 1.0).abs() > 1e-10 {
        return Err(Error::Hypothesis(format!(
            "normalization deviates by {:.3e}",
            check - 1.0
        )));
    }
    Ok((out, c))
}

/// Output of [`calderon_reconstruct`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalderonReport {
    pub result: Vec<C64>,
    /// `‖result − Pf‖ / ‖Pf‖`, `P` the projection onto the range
    pub residual: f64,
    pub nodes: usize,
}

/// `Σ_k 2m Δ ψ̃(t_k^{2m}L) ψ(t_k^{2m}L) f`.
pub fn calderon_reconstruct(
    calc: &dyn Calculus,
    psi: &PsiFunction,
    psi_tilde: &PsiFunction,
    f: &[C64],
    tgrid: &TGrid,
) -> Result<CalderonReport> {
    let op = calc.operator();
    check_len(op, f)?;
    let prod = psi.mul(psi_tilde)?;
    let scales: Vec<f64> = tgrid.nodes().iter().map(|&t| time_scale(op, t)).collect();
    let w = C64::new(op.order_2m() as f64 * tgrid.dlog(), 0.0);
    let weights = vec![w; scales.len()];
    let fm = mat_from_col(f);
    let r = calc.apply_sum(&prod, &scales, &weights, false, &mut |_| Ok(fm.clone()))?;
    let result = r.col_as_slice(0).to_vec();
    let pf = op.project_range(f);
    let wts = op.weights();
    let npf = norm2(wts, &pf);
    let residual = norm2(wts, &sub(&result, &pf)) / if npf > 0.0 { npf } else { 1.0 };
    Ok(CalderonReport {
        result,
        residual,
        nodes: scales.len(),
    })
}

/// One scale of an off-diagonal measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffdiagPoint {
    pub t: f64,
    pub norm: f64,
    /// `ln(1 + d^{2m}/t^{2m})`
    pub x: f64,
}

/// Output of [`measure_offdiag`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffdiagReport {
    pub dist: f64,
    /// fitted exponent in `‖1_F T_t 1_E‖ ≈ C (1 + d^{2m}/t^{2m})^{-γ}`
    pub gamma: Option<f64>,
    pub constant: f64,
    pub points: Vec<OffdiagPoint>,
    /// fewer than three scales above the 1e-14 floor
    pub saturated: bool,
}

/// Norm floor below which measured norms are treated as roundoff.
pub const OFFDIAG_FLOOR: f64 = 1e-14;

/// Measures `sup ‖1_F T_t(1_E f)‖ / ‖f‖` for each `t` and fits the decay
/// exponent. `family(t, block)` applies `T_t` to every column of `block`.
pub fn measure_offdiag(
    space: &MetricMeasureSpace,
    order_2m: u32,
    family: &dyn Fn(f64, &Mat<C64>) -> Result<Mat<C64>>,
    e: &[usize],
    f: &[usize],
    ts: &[f64],
) -> Result<OffdiagReport> {
    if e.is_empty() || f.is_empty() || ts.is_empty() {
        return invalid("empty set or scale list");
    }
    let n = space.len();
    if e.iter().chain(f).any(|&x| x >= n) {
        return invalid("point index out of range");
    }
    let w = space.weights();
    let dist = e
        .iter()
        .flat_map(|&x| f.iter().map(move |&y| (x, y)))
        .map(|(x, y)| space.dist(x, y))
        .fold(f64::INFINITY, f64::min);
    let basis = Mat::<C64>::from_fn(n, e.len(), |i, j| {
        if i == e[j] {
            C64::new(1.0 / w[i].sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let p = order_2m as i32;
    let mut points = Vec::with_capacity(ts.len());
    for &t in ts {
        let img = family(t, &basis)?;
        let comp = Mat::<C64>::from_fn(f.len(), e.len(), |i, j| img[(f[i], j)] * w[f[i]].sqrt());
        let norm = comp
            .singular_values()
            .map_err(|e| Error::Unsupported(format!("svd failed: {e:?}")))?
            .first()
            .copied()
            .unwrap_or(0.0);
        let x = (1.0 + (dist / t).powi(p)).ln();
        points.push(OffdiagPoint { t, norm, x });
    }
    let live: Vec<&OffdiagPoint> = points.iter().filter(|q| q.norm > OFFDIAG_FLOOR).collect();
    let saturated = live.len() < 3;
    let constant = points.iter().fold(0.0f64, |m, q| m.max(q.norm));
    let mut report = OffdiagReport {
        dist,
        gamma: None,
        constant,
        points: points.clone(),
        saturated,
    };
    if dist > 0.0 && !saturated {
        let xs: Vec<f64> = live.iter().map(|q| q.x).collect();
        let ys: Vec<f64> = live.iter().map(|q| q.norm.ln()).collect();
        if let Some((slope, icpt)) = linear_fit(&xs, &ys) {
            report.gamma = Some(-slope);
            report.constant = icpt.exp();
        }
    }
    Ok(report)
}

/// `E` = points within `radius` of `center` (strictly), `F` = points at
/// distance at least `sep` from all of `E`.
pub fn separated_sets(space: &MetricMeasureSpace, center: usize, radius: f64, sep: f64) -> (Vec<usize>, Vec<usize>) {
    let n = space.len();
    let e: Vec<usize> = (0..n).filter(|&x| space.dist(x, center) < radius).collect();
    let f: Vec<usize> = (0..n).filter(|&x| e.iter().all(|&y| space.dist(x, y) >= sep)).collect();
    (e, f)
}

/// Scales for off-diagonal fits: from one lattice spacing up to a quarter
/// of the separation, where `(1 + d²/t²)^{-γ}` is in its power-law regime.
pub fn offdiag_window(spacing: f64, sep: f64, q: u32) -> Result<Vec<f64>> {
    Ok(TGrid::new(spacing, sep / 4.0, q)?.nodes())
}

/// [`measure_offdiag`] for the family `t ↦ ψ(t^{2m}L)`.
pub fn measure_offdiag_psi(
    calc: &dyn Calculus,
    psi: &PsiFunction,
    e: &[usize],
    f: &[usize],
    ts: &[f64],
) -> Result<OffdiagReport> {
    let op = calc.operator();
    let fam = |t: f64, b: &Mat<C64>| calc.apply(psi, time_scale(op, t), b, false);
    measure_offdiag(op.space(), op.order_2m(), &fam, e, f, ts)
}

/// One ball and annulus of an `L^p̃ → L²` measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffdiagLpEntry {
    pub center: usize,
    pub radius: f64,
    pub j: u32,
    /// `‖1_B e^{-tL} 1_{S_j}‖_{p̃→2} / V(B)^{1/2 − 1/p̃}`
    pub ratio: f64,
    /// the same quantity through `‖1_{S_j} e^{-tL*} 1_B‖_{2→p̃'}`
    pub dual_ratio: f64,
}

/// Output of [`measure_offdiag_lp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffdiagLpReport {
    pub p_tilde: f64,
    pub q_tilde: f64,
    pub n: f64,
    pub entries: Vec<OffdiagLpEntry>,
    /// `max ratio_j · 2^{jn/p̃}` (the constant at `ε = 0`)
    pub sup_eps0: f64,
    /// decay rate of `ratio_j` in `j ≥ 1` (least-squares slope of `−log₂ ratio_j`)
    /// minus `n/p̃`, minimized over balls
    pub eps_star: f64,
    /// largest relative gap between direct and dual measurements
    pub dual_gap: f64,
}

/// Measures the `L^p̃ → L²` off-diagonal decay of `e^{-tL}`, `t = r^{2m}`,
/// on the balls `B(x, r)` for every center and radius.
pub fn measure_offdiag_lp(
    calc: &dyn Calculus,
    p_tilde: f64,
    radii: &[f64],
    centers: &[usize],
) -> Result<OffdiagLpReport> {
    if !(p_tilde > 1.0 && p_tilde < 2.0) {
        return invalid(format!("exponent {p_tilde} must lie in (1, 2)"));
    }
    let op = calc.operator();
    let space = op.space();
    let npts = op.len();
    let w = op.weights();
    let q_tilde = p_tilde / (p_tilde - 1.0);
    let n = space.ambient_dim() as f64;
    let eye = Mat::<C64>::identity(npts, npts);
    let fwd = calc.prepare(&semigroup_symbol(), &eye, false)?;
    let bwd = calc.prepare(&semigroup_symbol(), &eye, true)?;
    let mut entries = Vec::new();
    let mut eps_star = f64::INFINITY;
    let mut sup_eps0 = 0.0f64;
    let mut dual_gap = 0.0f64;
    let starts = |k: usize| -> Vec<Vec<C64>> {
        let mut v = vec![vec![C64::new(1.0, 0.0); k]];
        v.push(
            (0..k)
                .map(|i| C64::new(1.0 + (i % 3) as f64, (i % 5) as f64 * 0.1))
                .collect(),
        );
        v
    };
    for &r in radii {
        let t = time_scale(op, r);
        let k = fwd.at(t)?;
        let ks = bwd.at(t)?;
        for &c in centers {
            let ball = Ball::new(c, r)?;
            let b = space.ball_points(&ball);
            let vb = space.ball_volume(&ball);
            let norm_b = vb.powf(0.5 - 1.0 / p_tilde);
            let jmax = ((space.diam() / r).log2().ceil().max(0.0) as u32) + 1;
            let mut ratios = Vec::new();
            for j in 0..=jmax {
                let s = space.annulus(&ball, j);
                if s.is_empty() {
                    continue;
                }
                // L^p̃(S_j) → L²(B)
                let a = Mat::<C64>::from_fn(b.len(), s.len(), |i, l| {
                    k[(b[i], s[l])] * w[b[i]].sqrt() * w[s[l]].powf(-1.0 / p_tilde)
                });
                let val = pq_norm(a.as_ref(), p_tilde, 2.0, &starts(s.len()), 200) / norm_b;
                // L²(B) → L^q̃(S_j) for the adjoint semigroup
                let ad = Mat::<C64>::from_fn(s.len(), b.len(), |l, i| {
                    ks[(s[l], b[i])] * w[s[l]].powf(1.0 / q_tilde) / w[b[i]].sqrt()
                });
                let dual = pq_norm(ad.as_ref(), 2.0, q_tilde, &starts(b.len()), 200) / norm_b;
                if val > 1e-300 {
                    dual_gap = dual_gap.max((val - dual).abs() / val);
                }
                sup_eps0 = sup_eps0.max(val * 2f64.powf(j as f64 * n / p_tilde));
                ratios.push((j, val));
                entries.push(OffdiagLpEntry {
                    center: c,
                    radius: r,
                    j,
                    ratio: val,
                    dual_ratio: dual,
                });
            }
            let base = ratios.first().map(|p| p.1).unwrap_or(0.0);
            let live: Vec<(f64, f64)> = ratios
                .iter()
                .filter(|p| p.0 >= 1 && p.1 > OFFDIAG_FLOOR * base)
                .map(|p| (p.0 as f64, p.1.log2()))
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = live.into_iter().unzip();
            if let Some((slope, _)) = linear_fit(&xs, &ys) {
                eps_star = eps_star.min(-slope - n / p_tilde);
            }
        }
    }
    Ok(OffdiagLpReport {
        p_tilde,
        q_tilde,
        n,
        entries,
        sup_eps0,
        eps_star,
        dual_gap,
    })
}

/// Output of [`conservation_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `max_t ‖e^{-t^{2m}L}1 − 1‖ / ‖1‖`
    pub semigroup: f64,
    /// `max_t ‖ψ(t^{2m}L)1‖ / ‖1‖`
    pub psi: f64,
}

/// Checks `e^{-tL}1 = 1` and `ψ(tL)1 = 0` over the grid scales.
pub fn conservation_check(calc: &dyn Calculus, psi: &PsiFunction, tgrid: &TGrid) -> Result<ConservationReport> {
    let op = calc.operator();
    let one = vec![C64::new(1.0, 0.0); op.len()];
    let w = op.weights();
    let n1 = norm2(w, &one);
    let l1 = norm2(w, &op.apply(&one));
    if l1 > 1e-12 * op.norm_bound() * n1 {
        return Err(Error::Hypothesis(format!(
            "constants are not annihilated: ‖L1‖ = {l1:.3e}"
        )));
    }
    let f = mat_from_col(&one);
    let sg = calc.prepare(&semigroup_symbol(), &f, false)?;
    let ps = calc.prepare(psi, &f, false)?;
    let mut rep = ConservationReport {
        semigroup: 0.0,
        psi: 0.0,
    };
    for t in tgrid.nodes() {
        let s = time_scale(op, t);
        let a = sg.at(s)?;
        rep.semigroup = rep.semigroup.max(norm2(w, &sub(a.col_as_slice(0), &one)) / n1);
        let b = ps.at(s)?;
        rep.psi = rep.psi.max(norm2(w, b.col_as_slice(0)) / n1);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests;

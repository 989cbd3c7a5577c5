//! Hardy and BMO norms associated with an operator, molecules, and the
//! Carleson-measure description of BMO.

#[cfg(test)]
mod tests;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::calculus::{one_minus_exp, time_scale, Calculus, PsiFunction};
use crate::error::{invalid, Error, Result};
use crate::linalg::{inner, mat_from_col, norm2, sub};
use crate::operator::SectorialOperator;
use crate::space::{Ball, MetricMeasureSpace};
use crate::tent::{carleson_norm, tent_norm, FieldFunction, TGrid};

/// Tolerance for a molecule bound ratio to count as at most one.
pub const MOLECULE_SLACK: f64 = 1e-6;
/// Largest accepted `‖m − L^M b‖ / ‖m‖`.
pub const WITNESS_TOL: f64 = 1e-6;

/// `n / 4m` with `n` the ambient dimension.
pub fn critical_order(op: &SectorialOperator) -> f64 {
    op.space().ambient_dim() as f64 / (2.0 * op.order_2m() as f64)
}

/// `ψ(t_k^{2m}L) f` on every node.
pub fn psi_field(calc: &dyn Calculus, psi: &PsiFunction, f: &[C64], tgrid: &TGrid) -> Result<FieldFunction> {
    let op = calc.operator();
    if f.len() != op.len() {
        return invalid("function length differs from the operator");
    }
    let prep = calc.prepare(psi, &mat_from_col(f), false)?;
    let cols = tgrid
        .nodes()
        .iter()
        .map(|&t| Ok(prep.at(time_scale(op, t))?.col_as_slice(0).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    FieldFunction::from_columns(*tgrid, &cols)
}

/// Decay hypothesis on `ψ` for the square-function norm at exponent `p`.
pub fn hardy_hypothesis(op: &SectorialOperator, psi: &PsiFunction, p: f64) -> Result<()> {
    let kappa = critical_order(op);
    let (a, b) = (psi.alpha(), psi.beta());
    let fail = |what: &str, v: f64, bound: f64| {
        Err(Error::Hypothesis(format!(
            "p = {p} requires {what} > {bound:.4}, but {what} = {v:.4}"
        )))
    };
    let (amin, bmin) = if p < 2.0 {
        (0.0, kappa)
    } else if p > 2.0 {
        (kappa, 0.0)
    } else {
        (0.0, 0.0)
    };
    if !(a > amin) {
        return fail("alpha", a, amin);
    }
    if !(b > bmin) {
        return fail("beta", b, bmin);
    }
    Ok(())
}

/// Output of [`hardy_norm`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HardyNormReport {
    pub p: f64,
    pub psi: PsiFunction,
    pub value: f64,
    pub tgrid: TGrid,
    /// `|v(q) − v(2q)| / v(2q)` when a refined value was computed.
    pub refinement_delta: Option<f64>,
}

/// `‖𝒜(ψ(t^{2m}L) f)‖_{L^p}`.
pub fn hardy_norm(calc: &dyn Calculus, f: &[C64], p: f64, psi: &PsiFunction, tgrid: &TGrid) -> Result<HardyNormReport> {
    if !(p >= 1.0) || p.is_infinite() {
        return invalid(format!("Hardy exponent {p} must lie in [1, ∞)"));
    }
    hardy_hypothesis(calc.operator(), psi, p)?;
    let field = psi_field(calc, psi, f, tgrid)?;
    Ok(HardyNormReport {
        p,
        psi: psi.clone(),
        value: tent_norm(calc.operator().space(), &field, p)?,
        tgrid: *tgrid,
        refinement_delta: None,
    })
}

/// [`hardy_norm`] with the change under doubling `q` recorded.
pub fn hardy_norm_refined(
    calc: &dyn Calculus,
    f: &[C64],
    p: f64,
    psi: &PsiFunction,
    tgrid: &TGrid,
) -> Result<HardyNormReport> {
    let mut r = hardy_norm(calc, f, p, psi, tgrid)?;
    let fine = hardy_norm(calc, f, p, psi, &tgrid.refine())?;
    r.refinement_delta = Some(if fine.value > 0.0 {
        (r.value - fine.value).abs() / fine.value
    } else {
        0.0
    });
    Ok(r)
}

/// Centers and radii over which BMO suprema are taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
}

impl BallFamily {
    /// Every point with the given radii.
    pub fn all(space: &MetricMeasureSpace, radii: Vec<f64>) -> BallFamily {
        BallFamily {
            centers: (0..space.len()).collect(),
            radii,
        }
    }

    /// Every point with the grid nodes and the diameter as radii.
    pub fn for_tgrid(space: &MetricMeasureSpace, tgrid: &TGrid) -> BallFamily {
        let mut radii = tgrid.nodes();
        radii.push(space.diam());
        BallFamily::all(space, radii)
    }
}

/// Warning text when `M ≤ n/4m`.
pub fn bmo_warning(op: &SectorialOperator, m: u32) -> Option<String> {
    let k = critical_order(op);
    (m as f64 <= k).then(|| format!("M = {m} does not exceed n/4m = {k:.4}"))
}

/// `sup_B (V(B)⁻¹ Σ_B |(I − e^{-r_B^{2m}L})^M f|² μ)^{1/2}`.
pub fn bmo_norm(calc: &dyn Calculus, f: &[C64], m: u32, balls: &BallFamily) -> Result<f64> {
    let op = calc.operator();
    let space = op.space();
    if f.len() != op.len() {
        return invalid("function length differs from the operator");
    }
    if balls.centers.iter().any(|&c| c >= space.len()) {
        return invalid("ball center out of range");
    }
    let phi = one_minus_exp(m)?;
    let prep = calc.prepare(&phi, &mat_from_col(f), false)?;
    let mut sup = 0.0f64;
    for &r in &balls.radii {
        let g = prep.at(time_scale(op, r))?;
        let sq: Vec<f64> = g.col_as_slice(0).iter().map(|v| v.norm_sqr()).collect();
        let avg = space.average_real(r, &sq);
        for &c in &balls.centers {
            sup = sup.max(avg[c]);
        }
    }
    Ok(sup.max(0.0).sqrt())
}

/// One `(k, j)` entry of the molecule bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRatio {
    pub k: u32,
    pub j: u32,
    pub value: f64,
}

/// `m = L^M b` with the bounds
/// `‖(r^{2m}L)^k b‖_{L²(S_j(B))} ≤ r^{2mM} 2^{-jε} V(2^jB)^{-1/2}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Molecule {
    pub m: Vec<C64>,
    pub b: Vec<C64>,
    pub ball: Ball,
    pub order: u32,
    pub eps: f64,
    pub ratios: Vec<MoleculeRatio>,
    /// `‖m − L^M b‖ / ‖m‖`.
    pub residual: f64,
    pub valid: bool,
}

impl Molecule {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().fold(0.0, |m, r| m.max(r.value))
    }
}

fn annulus_count(space: &MetricMeasureSpace, r: f64) -> u32 {
    (space.diam() / r).log2().floor().max(0.0) as u32 + 1
}

fn molecule_ratios(op: &SectorialOperator, b: &[C64], ball: &Ball, order: u32, eps: f64) -> Vec<MoleculeRatio> {
    let space = op.space();
    let w = space.weights();
    let s = time_scale(op, ball.radius);
    let scale = s.powi(order as i32);
    let jmax = annulus_count(space, ball.radius);
    let shells: Vec<Vec<usize>> = (0..=jmax).map(|j| space.annulus(ball, j)).collect();
    let vols: Vec<f64> = (0..=jmax)
        .map(|j| space.ball_volume(&ball.dilate(2f64.powi(j as i32))))
        .collect();
    let mut out = Vec::new();
    let mut v = b.to_vec();
    for k in 0..=order {
        if k > 0 {
            v = op.apply(&v).into_iter().map(|x| x * s).collect();
        }
        for (j, shell) in shells.iter().enumerate() {
            let num = shell.iter().map(|&y| v[y].norm_sqr() * w[y]).sum::<f64>().sqrt();
            let den = scale * 2f64.powf(-(j as f64) * eps) / vols[j].sqrt();
            out.push(MoleculeRatio {
                k,
                j: j as u32,
                value: num / den,
            });
        }
    }
    out
}

fn power_apply(op: &SectorialOperator, b: &[C64], order: u32) -> Vec<C64> {
    (0..order).fold(b.to_vec(), |v, _| op.apply(&v))
}

/// Verifies a candidate `m` with witness `b`.
pub fn molecule_check(
    op: &SectorialOperator,
    m: &[C64],
    b: &[C64],
    ball: &Ball,
    order: u32,
    eps: f64,
) -> Result<Molecule> {
    if order == 0 || !(eps > 0.0) {
        return invalid(format!("molecule order {order} and eps {eps} must be positive"));
    }
    if m.len() != op.len() || b.len() != op.len() || ball.center >= op.len() {
        return invalid("molecule data does not match the operator");
    }
    let w = op.weights();
    let nm = norm2(w, m);
    if nm == 0.0 {
        return Err(Error::ZeroCandidate);
    }
    let residual = norm2(w, &sub(m, &power_apply(op, b, order))) / nm;
    if residual > WITNESS_TOL {
        return Err(Error::WitnessMismatch(residual));
    }
    let ratios = molecule_ratios(op, b, ball, order, eps);
    let valid = ratios.iter().all(|r| r.value <= 1.0 + MOLECULE_SLACK);
    Ok(Molecule {
        m: m.to_vec(),
        b: b.to_vec(),
        ball: *ball,
        order,
        eps,
        ratios,
        residual,
        valid,
    })
}

/// `b = c·e^{-r^{2m}L}(1_B V(B)^{-1/2})`, `m = L^M b`, with `c` making the
/// largest bound ratio one.
pub fn molecule_make(calc: &dyn Calculus, ball: &Ball, order: u32, eps: f64) -> Result<Molecule> {
    let op = calc.operator();
    let space = op.space();
    if ball.center >= op.len() {
        return invalid("ball center out of range");
    }
    let v = space.ball_volume(ball);
    let mut ind = vec![C64::new(0.0, 0.0); op.len()];
    space.for_each_in_ball(ball, |y| ind[y] = C64::new(1.0 / v.sqrt(), 0.0));
    let heat = calc.apply(
        &crate::calculus::semigroup_symbol(),
        time_scale(op, ball.radius),
        &mat_from_col(&ind),
        false,
    )?;
    let b0 = heat.col_as_slice(0).to_vec();
    if norm2(op.weights(), &b0) == 0.0 {
        return Err(Error::ZeroCandidate);
    }
    let top = molecule_ratios(op, &b0, ball, order, eps)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.value));
    if !(top > 0.0) {
        return Err(Error::ZeroCandidate);
    }
    let b: Vec<C64> = b0.iter().map(|x| x / top).collect();
    let m = power_apply(op, &b, order);
    molecule_check(op, &m, &b, ball, order, eps)
}

/// Output of [`carleson_characterization`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarlesonReport {
    /// `‖ν_{ψ,b}‖_𝒞` for `dν = |ψ(t^{2m}L)b|² dμ dt/t`.
    pub carleson: f64,
    pub bmo_sq: f64,
    /// `carleson / bmo_sq`.
    pub ratio: Option<f64>,
    /// Set when the BMO side vanishes but the Carleson side does not.
    pub inconsistent: bool,
}

/// Compares the Carleson norm of `|ψ(t^{2m}L)b|² dμ dt/t` with `‖b‖²_BMO`.
pub fn carleson_characterization(
    calc: &dyn Calculus,
    psi: &PsiFunction,
    b: &[C64],
    tgrid: &TGrid,
    order: u32,
) -> Result<CarlesonReport> {
    let op = calc.operator();
    let k = critical_order(op);
    if !(psi.beta() > k) {
        return Err(Error::Hypothesis(format!(
            "beta = {:.4} must exceed n/4m = {k:.4}",
            psi.beta()
        )));
    }
    let field = psi_field(calc, psi, b, tgrid)?;
    let dens = FieldFunction::new(
        *tgrid,
        op.len(),
        field.abs_sq().into_iter().map(|v| C64::new(v, 0.0)).collect(),
    )?;
    let carleson = carleson_norm(op.space(), &dens)?;
    let bmo = bmo_norm(calc, b, order, &BallFamily::for_tgrid(op.space(), tgrid))?;
    let bmo_sq = bmo * bmo;
    let tol = 1e-20 * norm2(op.weights(), b).powi(2).max(1e-300);
    Ok(CarlesonReport {
        carleson,
        bmo_sq,
        ratio: crate::tent::ratio(carleson, bmo_sq),
        inconsistent: bmo_sq <= tol && carleson > tol,
    })
}

/// Output of [`reproducing_pairing_check`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PairingReport {
    pub exact: C64,
    pub approx: C64,
    pub residual: f64,
}

/// `|⟨f,g⟩ − Σ_k ⟨ψ(t_k^{2m}L*)f, ψ̃(t_k^{2m}L)g⟩·2mΔ|` for a normalised pair.
pub fn reproducing_pairing_check(
    calc: &dyn Calculus,
    psi: &PsiFunction,
    psi_tilde: &PsiFunction,
    f: &[C64],
    g: &[C64],
    tgrid: &TGrid,
) -> Result<PairingReport> {
    let op = calc.operator();
    if f.len() != op.len() || g.len() != op.len() {
        return invalid("function length differs from the operator");
    }
    let k = critical_order(op);
    if !(psi.beta() + psi_tilde.beta() > k) {
        return Err(Error::Hypothesis(format!(
            "beta sum {:.4} must exceed n/4m = {k:.4}",
            psi.beta() + psi_tilde.beta()
        )));
    }
    let w = op.weights();
    let pf = calc.prepare(psi, &mat_from_col(f), true)?;
    let pg = calc.prepare(psi_tilde, &mat_from_col(g), false)?;
    let weight = op.order_2m() as f64 * tgrid.dlog();
    let mut approx = C64::new(0.0, 0.0);
    for t in tgrid.nodes() {
        let s = time_scale(op, t);
        let a: Mat<C64> = pf.at(s)?;
        let b: Mat<C64> = pg.at(s)?;
        approx += inner(w, a.col_as_slice(0), b.col_as_slice(0)) * weight;
    }
    let exact = inner(w, f, g);
    Ok(PairingReport {
        exact,
        approx,
        residual: (exact - approx).norm(),
    })
}

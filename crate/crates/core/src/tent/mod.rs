//! Tent spaces, square functions and Carleson measures on scale grids.

mod field;
mod tgrid;

#[cfg(test)]
mod tests;

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use field::{FieldDescriptor, FieldFunction};
pub use tgrid::TGrid;

use crate::calculus::{semigroup_symbol, time_scale, Calculus};
use crate::error::{invalid, Result};
use crate::linalg::norm_p_real;
use crate::space::{Ball, MetricMeasureSpace};

/// Relative slack when comparing a scale node with a lattice depth.
const DEPTH_SLACK: f64 = 1e-12;

fn check_field(space: &MetricMeasureSpace, f: &FieldFunction) -> Result<()> {
    if f.points() != space.len() {
        return invalid(format!("field has {} points, space has {}", f.points(), space.len()));
    }
    Ok(())
}

/// `𝒜F(x) = (Σ_k Σ_{d(y,x)<t_k} |F(y,t_k)|² μ_y / V(x,t_k) · Δ)^{1/2}`.
pub fn conical_square(space: &MetricMeasureSpace, f: &FieldFunction) -> Result<Vec<f64>> {
    check_field(space, f)?;
    let w = space.weights();
    let dlog = f.tgrid().dlog();
    let mut acc = vec![0.0; space.len()];
    for (k, &t) in f.nodes().iter().enumerate() {
        let a: Vec<f64> = f.slice(k).iter().zip(w).map(|(v, m)| v.norm_sqr() * m).collect();
        let s = space.ball_sums(t, &a);
        let v = space.volumes(t);
        for ((o, s), v) in acc.iter_mut().zip(s).zip(v) {
            *o += s / v * dlog;
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// Balls used for Carleson suprema: every center with radii from the
/// grid nodes and the diameter. On periodic grids only radii below half
/// the diameter are kept.
pub fn carleson_balls(space: &MetricMeasureSpace, tgrid: &TGrid) -> Vec<Ball> {
    let diam = space.diam();
    let mut radii = tgrid.nodes();
    radii.push(diam);
    if space.is_periodic_grid() {
        radii.retain(|&r| r < diam / 2.0);
    }
    radii.dedup();
    (0..space.len())
        .flat_map(|c| radii.iter().map(move |&r| Ball { center: c, radius: r }))
        .collect()
}

/// Per-point cumulative sums `Σ_{j<k} density(y, t_j)·Δ`.
struct TentTable {
    nodes: Vec<f64>,
    cum: Vec<f64>,
}

impl TentTable {
    fn new(density: &[f64], n: usize, tgrid: &TGrid) -> TentTable {
        let nodes = tgrid.nodes();
        let k = nodes.len();
        let dlog = tgrid.dlog();
        let mut cum = vec![0.0; n * (k + 1)];
        for y in 0..n {
            for j in 0..k {
                cum[y * (k + 1) + j + 1] = cum[y * (k + 1) + j] + density[j * n + y] * dlog;
            }
        }
        TentTable { nodes, cum }
    }

    /// `ν(T̂(B)) / V(B)` or `None` when `B` is the whole space.
    fn average(&self, space: &MetricMeasureSpace, ball: &Ball) -> Option<f64> {
        let depths = space.depths(ball)?;
        let w = space.weights();
        let k = self.nodes.len();
        let mut mass = 0.0;
        let mut vol = 0.0;
        for (y, d) in depths {
            let cut = self.nodes.partition_point(|&t| t <= d * (1.0 + DEPTH_SLACK));
            mass += w[y] * self.cum[y * (k + 1) + cut];
            vol += w[y];
        }
        Some(mass / vol)
    }

    fn averages(&self, space: &MetricMeasureSpace, balls: &[Ball]) -> Vec<Option<f64>> {
        balls.par_iter().map(|b| self.average(space, b)).collect()
    }
}

/// `𝒞F(x) = sup_{B ∋ x} (V(B)⁻¹ Σ_{(y,t_k) ∈ T̂(B)} |F|² μ_y Δ)^{1/2}`.
pub fn carleson_functional(space: &MetricMeasureSpace, f: &FieldFunction) -> Result<Vec<f64>> {
    check_field(space, f)?;
    let table = TentTable::new(&f.abs_sq(), space.len(), f.tgrid());
    let balls = carleson_balls(space, f.tgrid());
    let mut out = vec![0.0f64; space.len()];
    for (b, a) in balls.iter().zip(table.averages(space, &balls)) {
        if let Some(a) = a {
            space.for_each_in_ball(b, |x| out[x] = out[x].max(a));
        }
    }
    Ok(out.into_iter().map(f64::sqrt).collect())
}

/// `‖ν‖_𝒞` for `dν = density·μ dt/t`.
pub fn carleson_norm(space: &MetricMeasureSpace, density: &FieldFunction) -> Result<f64> {
    check_field(space, density)?;
    if density.values().iter().any(|v| v.im != 0.0 || v.re < 0.0) {
        return invalid("density must be real and nonnegative");
    }
    let d: Vec<f64> = density.values().iter().map(|v| v.re).collect();
    let table = TentTable::new(&d, space.len(), density.tgrid());
    let balls = carleson_balls(space, density.tgrid());
    Ok(table.averages(space, &balls).into_iter().flatten().fold(0.0, f64::max))
}

/// `‖𝒜F‖_{L^p}` for finite `p`, `‖𝒞F‖_∞` for `p = ∞`.
pub fn tent_norm(space: &MetricMeasureSpace, f: &FieldFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return invalid(format!("tent exponent {p} must be at least 1"));
    }
    if p.is_infinite() {
        return Ok(carleson_functional(space, f)?.into_iter().fold(0.0, f64::max));
    }
    Ok(norm_p_real(space.weights(), &conical_square(space, f)?, p))
}

/// `F*(x) = max_{d(y,x) < t_k} |F(y, t_k)|`.
pub fn nontangential_max(space: &MetricMeasureSpace, f: &FieldFunction) -> Result<Vec<f64>> {
    check_field(space, f)?;
    let nodes = f.nodes();
    let a: Vec<f64> = f.values().iter().map(|v| v.norm()).collect();
    let n = space.len();
    Ok((0..n)
        .into_par_iter()
        .map(|x| {
            let mut m = 0.0f64;
            for (k, &t) in nodes.iter().enumerate() {
                space.for_each_in_ball(&Ball { center: x, radius: t }, |y| m = m.max(a[k * n + y]));
            }
            m
        })
        .collect())
}

/// `N_{h,L} f(x) = max_{d(y,x)<t_k} (A_{t_k} |e^{-t_k^{2m}L} f|²(y))^{1/2}`.
pub fn maximal_nh(calc: &dyn Calculus, f: &[C64], tgrid: &TGrid) -> Result<Vec<f64>> {
    let op = calc.operator();
    let space = op.space();
    if f.len() != space.len() {
        return invalid("function length differs from the space");
    }
    let col = Mat::<C64>::from_fn(f.len(), 1, |i, _| f[i]);
    let prep = calc.prepare(&semigroup_symbol(), &col, false)?;
    let mut cols = Vec::with_capacity(tgrid.len());
    for t in tgrid.nodes() {
        let u = prep.at(time_scale(op, t))?;
        let sq: Vec<f64> = u.col_as_slice(0).iter().map(|v| v.norm_sqr()).collect();
        cols.push(
            space
                .average_real(t, &sq)
                .into_iter()
                .map(|v| C64::new(v.max(0.0).sqrt(), 0.0))
                .collect(),
        );
    }
    nontangential_max(space, &FieldFunction::from_columns(*tgrid, &cols)?)
}

/// Uncentered `M₂f(x) = sup_{B ∋ x} (V(B)⁻¹ Σ_B |f|² μ)^{1/2}` over all
/// centers and the given radii.
pub fn maximal_m2(space: &MetricMeasureSpace, f: &[C64], radii: &[f64]) -> Result<Vec<f64>> {
    if f.len() != space.len() {
        return invalid("function length differs from the space");
    }
    let sq: Vec<f64> = f.iter().map(|v| v.norm_sqr()).collect();
    let mut out = vec![0.0f64; space.len()];
    for &r in radii {
        let avg = space.average_real(r, &sq);
        for (c, a) in avg.into_iter().enumerate() {
            space.for_each_in_ball(&Ball { center: c, radius: r }, |x| out[x] = out[x].max(a));
        }
    }
    Ok(out.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// `∬ |F G| dμ dt/t`.
pub fn tent_pairing(space: &MetricMeasureSpace, f: &FieldFunction, g: &FieldFunction) -> Result<f64> {
    check_field(space, f)?;
    f.check_compatible(g)?;
    let n = space.len();
    let w = space.weights();
    let s: f64 = f
        .values()
        .iter()
        .zip(g.values())
        .enumerate()
        .map(|(i, (a, b))| a.norm() * b.norm() * w[i % n])
        .sum();
    Ok(s * f.tgrid().dlog())
}

/// `num / den`, `None` when both vanish and `+∞` when only `den` does.
pub fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else if num == 0.0 {
        None
    } else {
        Some(f64::INFINITY)
    }
}

/// Measured left/right ratios of the tent-space duality inequalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub p: f64,
    pub pairing: f64,
    /// `∬|FG| / ∫ 𝒜F·𝒜G dμ`.
    pub cone: Option<f64>,
    /// `∬|FG| / ∫ 𝒜F·𝒞G dμ`.
    pub carleson: Option<f64>,
    /// `∬|FG| / (‖F‖_{T^p} ‖G‖_{T^{p'}})`.
    pub holder: Option<f64>,
    /// `‖𝒞(FG)‖_p / (‖F*‖_p ‖𝒞G‖_∞)`, only for `p > 2`.
    pub product: Option<f64>,
}

pub fn duality_checks(
    space: &MetricMeasureSpace,
    f: &FieldFunction,
    g: &FieldFunction,
    p: f64,
) -> Result<DualityReport> {
    if !(p >= 1.0) || p.is_infinite() {
        return invalid(format!("duality exponent {p} must lie in [1, ∞)"));
    }
    let pairing = tent_pairing(space, f, g)?;
    let w = space.weights();
    let af = conical_square(space, f)?;
    let ag = conical_square(space, g)?;
    let cg = carleson_functional(space, g)?;
    let cg_inf = cg.iter().copied().fold(0.0, f64::max);
    let int = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).zip(w).map(|((a, b), m)| a * b * m).sum() };
    let holder_den = if p == 1.0 {
        norm_p_real(w, &af, 1.0) * cg_inf
    } else {
        let q = p / (p - 1.0);
        norm_p_real(w, &af, p) * norm_p_real(w, &ag, q)
    };
    let product = if p > 2.0 {
        let cfg = carleson_functional(space, &f.mul(g)?)?;
        let fs = nontangential_max(space, f)?;
        Some(ratio(norm_p_real(w, &cfg, p), norm_p_real(w, &fs, p) * cg_inf))
    } else {
        None
    };
    Ok(DualityReport {
        p,
        pairing,
        cone: ratio(pairing, int(&af, &ag)),
        carleson: ratio(pairing, int(&af, &cg)),
        holder: ratio(pairing, holder_den),
        product: product.flatten(),
    })
}

/// `∬ |F| dν / (‖F*‖₁ ‖ν‖_𝒞)` for `dν = density·μ dt/t`.
pub fn carleson_duality(space: &MetricMeasureSpace, f: &FieldFunction, density: &FieldFunction) -> Result<Option<f64>> {
    let lhs = tent_pairing(space, f, density)?;
    let fs = nontangential_max(space, f)?;
    let den = norm_p_real(space.weights(), &fs, 1.0) * carleson_norm(space, density)?;
    Ok(ratio(lhs, den))
}

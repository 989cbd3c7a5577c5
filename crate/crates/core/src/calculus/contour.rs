//! Functional calculus by trapezoidal quadrature of the Cauchy integral
//! over the boundary of a sector.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::sync::{Arc, Mutex};

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::psi::{PsiForm, PsiFunction};
use super::{check_symbol, Calculus, Engine, Prepared};
use crate::error::{Error, Result};
use crate::operator::SectorialOperator;

const MIN_WINDOW: (f64, f64) = (1e-6, 1e6);
const MAX_OCTAVES: i64 = 120;
const CACHE_BUDGET: usize = 1 << 24;

/// `φ(sL) = φ∞ + (φ0 − φ∞)(1 + sL)⁻¹ + (1/2πi)∫_{∂Σ_θ} r(sλ)(λ − L)⁻¹ dλ`
/// with `r = φ − φ∞ − (φ0 − φ∞)/(1+z)` and `θ` midway between the sector
/// angle of `L` and that of `φ`. Nodes lie on the global lattice
/// `|λ| = e^{jh}`, `h = ln 2 / q`, so sums over scales share solves.
///
/// When `ker L = ker L*`, the remainder integral runs on `Pf` and its result
/// is projected again: solves near the origin are nearly singular and would
/// otherwise leak round-off into the kernel.
pub struct ContourCalculus {
    op: Arc<SectorialOperator>,
    q: u32,
    tol: f64,
    deflate: bool,
}

impl ContourCalculus {
    pub fn new(op: &SectorialOperator) -> ContourCalculus {
        ContourCalculus::with_nodes(op, 32)
    }

    /// `q` nodes per octave on each ray.
    pub fn with_nodes(op: &SectorialOperator, q: u32) -> ContourCalculus {
        let w = op.weights();
        let deflate = !op.kernel_basis().is_empty()
            && op.kernel_basis().iter().all(|k| {
                let lk = op.apply_adjoint(k);
                crate::linalg::norm2(w, &lk) <= 1e-12 * op.norm_bound() * crate::linalg::norm2(w, k)
            });
        ContourCalculus {
            op: Arc::new(op.clone()),
            q: q.max(1),
            tol: 1e-15,
            deflate,
        }
    }

    /// `Pf` column by column when deflating, `f` otherwise.
    fn range_part(&self, f: &Mat<C64>) -> Mat<C64> {
        if !self.deflate {
            return f.clone();
        }
        let mut out = f.clone();
        for j in 0..f.ncols() {
            let p = self.op.project_range(f.col_as_slice(j));
            out.col_as_slice_mut(j).copy_from_slice(&p);
        }
        out
    }

    fn h(&self) -> f64 {
        LN_2 / self.q as f64
    }
}

/// Ray angle, split coefficients and the `x = s|λ|` window of the remainder.
struct Plan {
    theta: f64,
    inf: C64,
    res: C64,
    phi: PsiFunction,
    x_lo: f64,
    x_hi: f64,
}

impl Plan {
    fn new(op: &SectorialOperator, phi: &PsiFunction, h: f64, tol: f64) -> Plan {
        let split = !phi.is_psi_class();
        let (inf, res) = if split {
            let i = phi.value_at_infinity();
            (i, phi.value_at_zero() - i)
        } else {
            (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
        };
        let sigma = phi.sigma().min(PI);
        let theta = 0.5 * (op.sector_angle() + sigma);
        let mut plan = Plan {
            theta,
            inf,
            res,
            phi: phi.clone(),
            x_lo: MIN_WINDOW.0,
            x_hi: MIN_WINDOW.1,
        };
        let mag = |j: i64| -> f64 {
            let x = (j as f64 * h).exp();
            plan.rest(C64::from_polar(x, theta))
                .norm()
                .max(plan.rest(C64::from_polar(x, -theta)).norm())
        };
        let j0 = (MIN_WINDOW.0.ln() / h).floor() as i64;
        let j1 = (MIN_WINDOW.1.ln() / h).ceil() as i64;
        let peak = (j0..=j1).map(mag).fold(0.0f64, f64::max);
        let q = (LN_2 / h).round() as i64;
        let limit = MAX_OCTAVES * q;
        let extend = |start: i64, step: i64| -> i64 {
            let mut j = start;
            let mut quiet = 0;
            while quiet < q && (j - start).abs() < limit {
                j += step;
                if mag(j) <= tol * peak {
                    quiet += 1;
                } else {
                    quiet = 0;
                }
            }
            j
        };
        let lo = extend(j0, -1);
        let hi = extend(j1, 1);
        plan.x_lo = (lo as f64 * h).exp();
        plan.x_hi = (hi as f64 * h).exp();
        plan
    }

    fn rest(&self, z: C64) -> C64 {
        let v = self.phi.eval(z);
        if self.res == C64::new(0.0, 0.0) && self.inf == C64::new(0.0, 0.0) {
            v
        } else {
            v - self.inf - self.res / (z + 1.0)
        }
    }

    fn range(&self, s: f64, h: f64) -> (i64, i64) {
        (
            ((self.x_lo / s).ln() / h).floor() as i64,
            ((self.x_hi / s).ln() / h).ceil() as i64,
        )
    }

    /// Node `λ` and quadrature weight for lattice index `j` on the ray of sign `sg`.
    fn lambda(&self, j: i64, sg: i8, h: f64) -> C64 {
        C64::from_polar((j as f64 * h).exp(), sg as f64 * self.theta)
    }

    fn weight(&self, j: i64, sg: i8, s: f64, h: f64) -> C64 {
        let lam = self.lambda(j, sg, h);
        let two_pi_i = C64::new(0.0, 2.0 * PI);
        -(sg as f64) * h * lam * self.rest(lam * s) / two_pi_i
    }
}

fn solve_cols(op: &SectorialOperator, zeta: C64, f: &Mat<C64>, adjoint: bool) -> Result<Mat<C64>> {
    let fac = op.factor_resolvent(zeta, adjoint)?;
    let mut out = Mat::<C64>::zeros(f.nrows(), f.ncols());
    for j in 0..f.ncols() {
        let x = fac.solve(f.col_as_slice(j));
        out.col_as_slice_mut(j).copy_from_slice(&x);
    }
    Ok(out)
}

/// `(1 + sL)⁻¹ F = −s⁻¹ (−1/s − L)⁻¹ F`.
fn unit_resolvent(op: &SectorialOperator, s: f64, f: &Mat<C64>, adjoint: bool) -> Result<Mat<C64>> {
    let x = solve_cols(op, C64::new(-1.0 / s, 0.0), f, adjoint)?;
    Ok(x * faer::Scale(C64::new(-1.0 / s, 0.0)))
}

fn scaled(f: &Mat<C64>, c: C64) -> Mat<C64> {
    f * faer::Scale(c)
}

type Key = (i64, i8);

struct ContourPrepared<'a> {
    calc: &'a ContourCalculus,
    plan: Plan,
    f: Mat<C64>,
    /// right-hand sides of the contour solves
    fr: Mat<C64>,
    adjoint: bool,
    cache: Mutex<BTreeMap<Key, Arc<Mat<C64>>>>,
}

impl ContourPrepared<'_> {
    fn solutions(&self, keys: &[Key]) -> Result<Vec<Arc<Mat<C64>>>> {
        let h = self.calc.h();
        let missing: Vec<Key> = {
            let c = self.cache.lock().unwrap();
            keys.iter().filter(|k| !c.contains_key(k)).copied().collect()
        };
        let fresh: Vec<(Key, Mat<C64>)> = missing
            .par_iter()
            .map(|&(j, sg)| {
                let lam = self.plan.lambda(j, sg, h);
                solve_cols(&self.calc.op, lam, &self.fr, self.adjoint).map(|x| ((j, sg), x))
            })
            .collect::<Result<_>>()?;
        let mut c = self.cache.lock().unwrap();
        let per = self.f.nrows() * self.f.ncols();
        let mut out = Vec::with_capacity(keys.len());
        let fresh: BTreeMap<Key, Arc<Mat<C64>>> = fresh.into_iter().map(|(k, m)| (k, Arc::new(m))).collect();
        for k in keys {
            let m = match c.get(k) {
                Some(m) => m.clone(),
                None => fresh[k].clone(),
            };
            out.push(m);
        }
        for (k, m) in fresh {
            if (c.len() + 1) * per <= CACHE_BUDGET {
                c.insert(k, m);
            }
        }
        Ok(out)
    }
}

impl Prepared for ContourPrepared<'_> {
    fn at(&self, s: f64) -> Result<Mat<C64>> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("scale {s} must be positive")));
        }
        let h = self.calc.h();
        let (j0, j1) = self.plan.range(s, h);
        let keys: Vec<Key> = (j0..=j1).flat_map(|j| [(j, -1i8), (j, 1i8)]).collect();
        let sols = self.solutions(&keys)?;
        let mut acc = Mat::<C64>::zeros(self.f.nrows(), self.f.ncols());
        for (k, x) in keys.iter().zip(&sols) {
            let w = self.plan.weight(k.0, k.1, s, h);
            if w != C64::new(0.0, 0.0) {
                acc += scaled(x, w);
            }
        }
        let mut acc = self.calc.range_part(&acc);
        if self.plan.inf != C64::new(0.0, 0.0) {
            acc += scaled(&self.f, self.plan.inf);
        }
        if self.plan.res != C64::new(0.0, 0.0) {
            acc += scaled(&unit_resolvent(&self.calc.op, s, &self.f, self.adjoint)?, self.plan.res);
        }
        Ok(acc)
    }
}

/// `c·z^a (1+z)^{-(a+b)}` with integer exponents, evaluated exactly as
/// `c [I − (1 + sL)⁻¹]^a (1 + sL)^{-b}`: every factor is bounded, so large
/// `s` does not amplify round-off the way `(sL)^a` would.
struct RationalPrepared<'a> {
    op: &'a SectorialOperator,
    c: f64,
    a: u32,
    ab: u32,
    f: Mat<C64>,
    adjoint: bool,
}

fn integer_rational(form: &PsiForm) -> Option<(f64, u32, u32)> {
    let int = |x: f64| (x >= 0.0 && x.fract() == 0.0 && x < 64.0).then_some(x as u32);
    match form {
        PsiForm::Rational { a, b } => Some((1.0, int(*a)?, int(a + b)?)),
        PsiForm::Scaled { c, inner } => integer_rational(inner).map(|(c0, a, ab)| (c * c0, a, ab)),
        _ => None,
    }
}

impl Prepared for RationalPrepared<'_> {
    fn at(&self, s: f64) -> Result<Mat<C64>> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("scale {s} must be positive")));
        }
        let fac = self.op.factor_resolvent(C64::new(-1.0 / s, 0.0), self.adjoint)?;
        // (1 + sL)⁻¹ = −s⁻¹ (−1/s − L)⁻¹
        let unit = |x: &[C64]| -> Vec<C64> { fac.solve(x).into_iter().map(|v| v * (-1.0 / s)).collect() };
        let mut out = Mat::<C64>::zeros(self.f.nrows(), self.f.ncols());
        for j in 0..self.f.ncols() {
            let mut x = self.f.col_as_slice(j).to_vec();
            for _ in self.a..self.ab {
                x = unit(&x);
            }
            for _ in 0..self.a {
                let y = unit(&x);
                x.iter_mut().zip(&y).for_each(|(v, u)| *v -= u);
            }
            for (o, v) in out.col_as_slice_mut(j).iter_mut().zip(&x) {
                *o = v * self.c;
            }
        }
        Ok(out)
    }
}

impl Calculus for ContourCalculus {
    fn operator(&self) -> &SectorialOperator {
        &self.op
    }

    fn engine(&self) -> Engine {
        Engine::Contour
    }

    fn prepare(&self, phi: &PsiFunction, f: &Mat<C64>, adjoint: bool) -> Result<Box<dyn Prepared + '_>> {
        check_symbol(&self.op, phi)?;
        if let Some((c, a, ab)) = integer_rational(phi.form()) {
            return Ok(Box::new(RationalPrepared {
                op: &self.op,
                c,
                a,
                ab,
                f: f.clone(),
                adjoint,
            }));
        }
        Ok(Box::new(ContourPrepared {
            calc: self,
            plan: Plan::new(&self.op, phi, self.h(), self.tol),
            f: f.clone(),
            fr: self.range_part(f),
            adjoint,
            cache: Mutex::new(BTreeMap::new()),
        }))
    }

    fn apply_sum(
        &self,
        phi: &PsiFunction,
        scales: &[f64],
        weights: &[C64],
        adjoint: bool,
        terms: &mut dyn FnMut(usize) -> Result<Mat<C64>>,
    ) -> Result<Mat<C64>> {
        check_symbol(&self.op, phi)?;
        if scales.is_empty() || scales.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "scales and weights must be nonempty and match".into(),
            ));
        }
        let h = self.h();
        let plan = Plan::new(&self.op, phi, h, self.tol);
        let ts: Vec<Mat<C64>> = (0..scales.len()).map(&mut *terms).collect::<Result<_>>()?;
        let trs: Vec<Mat<C64>> = ts.iter().map(|t| self.range_part(t)).collect();
        let ranges: Vec<(i64, i64)> = scales.iter().map(|&s| plan.range(s, h)).collect();
        let lo = ranges.iter().map(|r| r.0).min().unwrap();
        let hi = ranges.iter().map(|r| r.1).max().unwrap();
        let (n, m) = (ts[0].nrows(), ts[0].ncols());
        let keys: Vec<Key> = (lo..=hi).flat_map(|j| [(j, -1i8), (j, 1i8)]).collect();
        let parts: Vec<Mat<C64>> = keys
            .par_chunks(16)
            .map(|chunk| -> Result<Mat<C64>> {
                let mut acc = Mat::<C64>::zeros(n, m);
                for &(j, sg) in chunk {
                    let mut rhs = Mat::<C64>::zeros(n, m);
                    let mut any = false;
                    for (k, t) in trs.iter().enumerate() {
                        if j < ranges[k].0 || j > ranges[k].1 {
                            continue;
                        }
                        let w = plan.weight(j, sg, scales[k], h) * weights[k];
                        if w != C64::new(0.0, 0.0) {
                            rhs += scaled(t, w);
                            any = true;
                        }
                    }
                    if any {
                        acc += solve_cols(&self.op, plan.lambda(j, sg, h), &rhs, adjoint)?;
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut acc = Mat::<C64>::zeros(n, m);
        for p in &parts {
            acc += p;
        }
        let mut acc = self.range_part(&acc);
        for (k, t) in ts.iter().enumerate() {
            if plan.inf != C64::new(0.0, 0.0) {
                acc += scaled(t, plan.inf * weights[k]);
            }
            if plan.res != C64::new(0.0, 0.0) {
                acc += scaled(&unit_resolvent(&self.op, scales[k], t, adjoint)?, plan.res * weights[k]);
            }
        }
        Ok(acc)
    }

    fn fractional_power(&self, gamma: f64, f: &Mat<C64>, adjoint: bool) -> Result<Mat<C64>> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("power {gamma} must be positive")));
        }
        let k = gamma.floor() as u32;
        let g = gamma - k as f64;
        let apply_l = |x: &Mat<C64>| -> Mat<C64> {
            let mut out = Mat::<C64>::zeros(x.nrows(), x.ncols());
            for j in 0..x.ncols() {
                let y = self.op.apply_with(x.col_as_slice(j), adjoint);
                out.col_as_slice_mut(j).copy_from_slice(&y);
            }
            out
        };
        let mut x = f.clone();
        for _ in 0..k {
            x = apply_l(&x);
        }
        if g < 1e-15 {
            return Ok(x);
        }
        // z^g = [z^g / (1+z)]·(1 + z)
        let phi = PsiFunction::from_form(PsiForm::Rational { a: g, b: 1.0 - g })?;
        let rhs = &x + apply_l(&x);
        self.prepare(&phi, &rhs, adjoint)?.at(1.0)
    }
}

//! Discrete sectorial operators: divergence-form stencils with complex
//! coefficients, resolvents, sectoriality diagnostics and a dense spectral
//! oracle.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::linalg::{bandwidth, cuthill_mckee, inner, norm2, BandLu, Csr, DiffForm, ONE, ZERO};
use crate::space::{MetricMeasureSpace, SpaceDescriptor, Topology};

/// Default largest dimension for dense factorizations.
pub const DEFAULT_DENSE_BUDGET: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Dirichlet,
}

/// A grid edge; `b = None` marks a half-edge to the zero boundary value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub a: usize,
    pub b: Option<usize>,
    pub axis: usize,
}

/// Edge list of the nearest-neighbour stencil, in canonical order.
pub fn stencil_edges(space: &MetricMeasureSpace, boundary: Boundary) -> Result<Vec<Edge>> {
    let dims = space
        .dims()
        .ok_or_else(|| Error::InvalidArgument("divergence-form operators need a grid space".into()))?
        .to_vec();
    let topo = space.topology().unwrap();
    match (boundary, topo) {
        (Boundary::Periodic, Topology::Periodic) | (Boundary::Dirichlet, Topology::Bounded) => {}
        _ => return invalid(format!("boundary {boundary:?} does not match topology {topo:?}")),
    }
    let mut edges = Vec::new();
    for x in 0..space.len() {
        let c = space.coords(x);
        for (k, &len) in dims.iter().enumerate() {
            match boundary {
                Boundary::Periodic => {
                    if len > 1 {
                        let mut c2 = c.clone();
                        c2[k] = (c[k] + 1) % len;
                        edges.push(Edge {
                            a: x,
                            b: Some(space.index(&c2)),
                            axis: k,
                        });
                    }
                }
                Boundary::Dirichlet => {
                    if c[k] == 0 {
                        edges.push(Edge { a: x, b: None, axis: k });
                    }
                    if c[k] + 1 < len {
                        let mut c2 = c.clone();
                        c2[k] += 1;
                        edges.push(Edge {
                            a: x,
                            b: Some(space.index(&c2)),
                            axis: k,
                        });
                    } else {
                        edges.push(Edge { a: x, b: None, axis: k });
                    }
                }
            }
        }
    }
    Ok(edges)
}

/// How edge coefficients are generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientDescriptor {
    Constant {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `Re a ~ U[delta, lambda]`, `arg a ~ U[-max_angle, max_angle]`.
    Random {
        delta: f64,
        lambda: f64,
        #[serde(default)]
        max_angle: f64,
        seed: u64,
    },
    Values {
        values: Vec<[f64; 2]>,
    },
}

/// Per-edge complex coefficients `a_e`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub values: Vec<C64>,
    pub descriptor: CoefficientDescriptor,
}

impl CoefficientField {
    pub fn constant(a: C64, edges: usize) -> CoefficientField {
        CoefficientField {
            values: vec![a; edges],
            descriptor: CoefficientDescriptor::Constant { re: a.re, im: a.im },
        }
    }

    pub fn random(edges: usize, delta: f64, lambda: f64, max_angle: f64, seed: u64) -> Result<CoefficientField> {
        if !(delta > 0.0) || !(lambda >= delta) || !(0.0..std::f64::consts::FRAC_PI_2).contains(&max_angle) {
            return invalid("random coefficients need 0 < delta <= lambda and 0 <= max_angle < pi/2");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..edges)
            .map(|_| {
                let re = rng.random_range(delta..=lambda);
                let ang = if max_angle > 0.0 {
                    rng.random_range(-max_angle..=max_angle)
                } else {
                    0.0
                };
                C64::new(re, re * ang.tan())
            })
            .collect();
        Ok(CoefficientField {
            values,
            descriptor: CoefficientDescriptor::Random {
                delta,
                lambda,
                max_angle,
                seed,
            },
        })
    }

    pub fn from_values(values: Vec<C64>) -> CoefficientField {
        let descriptor = CoefficientDescriptor::Values {
            values: values.iter().map(|v| [v.re, v.im]).collect(),
        };
        CoefficientField { values, descriptor }
    }

    pub fn from_descriptor(d: &CoefficientDescriptor, edges: usize) -> Result<CoefficientField> {
        match d {
            CoefficientDescriptor::Constant { re, im } => Ok(Self::constant(C64::new(*re, *im), edges)),
            CoefficientDescriptor::Random {
                delta,
                lambda,
                max_angle,
                seed,
            } => Self::random(edges, *delta, *lambda, *max_angle, *seed),
            CoefficientDescriptor::Values { values } => {
                if values.len() != edges {
                    return invalid(format!("{} coefficients for {edges} edges", values.len()));
                }
                Ok(Self::from_values(values.iter().map(|v| C64::new(v[0], v[1])).collect()))
            }
        }
    }

    /// Ellipticity constant `min Re a_e`.
    pub fn ellipticity(&self) -> f64 {
        self.values.iter().map(|a| a.re).fold(f64::INFINITY, f64::min)
    }

    /// Bound `max |a_e|`.
    pub fn bound(&self) -> f64 {
        self.values.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// `max |arg a_e|`, the sector angle of the resulting form.
    pub fn angle(&self) -> f64 {
        self.values.iter().map(|a| a.arg().abs()).fold(0.0, f64::max)
    }
}

/// Serializable description of an operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorDescriptor {
    DivergenceForm {
        space: SpaceDescriptor,
        coefficients: CoefficientDescriptor,
        boundary: Boundary,
        #[serde(default = "one_u32")]
        power: u32,
        #[serde(default = "one_f64")]
        scale: f64,
    },
    Matrix {
        label: String,
        entries: Vec<(usize, usize, [f64; 2])>,
        sector_angle: f64,
        kernel_dim: usize,
        #[serde(default = "one_f64")]
        scale: f64,
    },
}

fn one_u32() -> u32 {
    1
}
fn one_f64() -> f64 {
    1.0
}

/// A discrete sectorial operator `L` acting on point functions.
#[derive(Clone, Debug)]
pub struct SectorialOperator {
    space: Arc<MetricMeasureSpace>,
    matrix: Csr,
    adjoint: Csr,
    action: DiffForm,
    adjoint_action: DiffForm,
    order_2m: u32,
    sector_angle: f64,
    kernel: Vec<Vec<C64>>,
    descriptor: OperatorDescriptor,
    ordering: Vec<usize>,
    band: (usize, usize),
    norm_bound: f64,
}

/// Builds `L = -div(A ∇)` with the standard second-order stencil.
pub fn build_divergence_form(
    space: &MetricMeasureSpace,
    coeffs: &CoefficientField,
    boundary: Boundary,
) -> Result<SectorialOperator> {
    let edges = stencil_edges(space, boundary)?;
    if edges.len() != coeffs.values.len() {
        return invalid(format!(
            "{} coefficients supplied for {} edges",
            coeffs.values.len(),
            edges.len()
        ));
    }
    for (e, a) in coeffs.values.iter().enumerate() {
        if !(a.re > 0.0) || !a.im.is_finite() {
            return Err(Error::Ellipticity { edge: e, re: a.re });
        }
    }
    let h = space.min_spacing();
    let inv_h2 = 1.0 / (h * h);
    let mut trip = Vec::with_capacity(4 * edges.len());
    for (e, a) in edges.iter().zip(&coeffs.values) {
        let a = a * inv_h2;
        trip.push((e.a, e.a, a));
        if let Some(b) = e.b {
            trip.push((b, b, a));
            trip.push((e.a, b, -a));
            trip.push((b, e.a, -a));
        }
    }
    let matrix = Csr::from_triplets(space.len(), trip);
    let kernel = match boundary {
        Boundary::Periodic => {
            let c = 1.0 / space.total_measure().sqrt();
            vec![vec![C64::new(c, 0.0); space.len()]]
        }
        Boundary::Dirichlet => Vec::new(),
    };
    let descriptor = OperatorDescriptor::DivergenceForm {
        space: space.descriptor(),
        coefficients: coeffs.descriptor.clone(),
        boundary,
        power: 1,
        scale: 1.0,
    };
    SectorialOperator::assemble(Arc::new(space.clone()), matrix, 2, coeffs.angle(), kernel, descriptor)
}

impl SectorialOperator {
    fn assemble(
        space: Arc<MetricMeasureSpace>,
        matrix: Csr,
        order_2m: u32,
        sector_angle: f64,
        kernel: Vec<Vec<C64>>,
        descriptor: OperatorDescriptor,
    ) -> Result<SectorialOperator> {
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&sector_angle) {
            return invalid(format!("sector angle {sector_angle} outside [0, pi/2)"));
        }
        let adjoint = matrix.weighted_adjoint(space.weights());
        let ordering = cuthill_mckee(&matrix);
        let band = bandwidth(&matrix, &ordering);
        let norm_bound = matrix.gershgorin().max(adjoint.gershgorin());
        let action = DiffForm::new(&matrix);
        let adjoint_action = DiffForm::new(&adjoint);
        Ok(SectorialOperator {
            space,
            matrix,
            adjoint,
            action,
            adjoint_action,
            order_2m,
            sector_angle,
            kernel,
            descriptor,
            ordering,
            band,
            norm_bound,
        })
    }

    /// Operator given by explicit matrix entries on `space`; `kernel` must be
    /// a μ-orthonormal basis of its null space.
    pub fn from_triplets(
        space: &MetricMeasureSpace,
        label: &str,
        entries: Vec<(usize, usize, C64)>,
        sector_angle: f64,
        kernel: Vec<Vec<C64>>,
    ) -> Result<SectorialOperator> {
        let n = space.len();
        if entries.iter().any(|e| e.0 >= n || e.1 >= n) {
            return invalid("matrix entry out of range");
        }
        let descriptor = OperatorDescriptor::Matrix {
            label: label.to_string(),
            entries: entries.iter().map(|(i, j, v)| (*i, *j, [v.re, v.im])).collect(),
            sector_angle,
            kernel_dim: kernel.len(),
            scale: 1.0,
        };
        let matrix = Csr::from_triplets(n, entries);
        Self::assemble(Arc::new(space.clone()), matrix, 2, sector_angle, kernel, descriptor)
    }

    /// Diagonal operator with the given entries.
    pub fn diagonal(space: &MetricMeasureSpace, diag: &[C64]) -> Result<SectorialOperator> {
        let angle = diag
            .iter()
            .filter(|v| v.norm() > 0.0)
            .map(|v| v.arg().abs())
            .fold(0.0, f64::max);
        let mut kernel = Vec::new();
        for (i, v) in diag.iter().enumerate() {
            if *v == ZERO {
                let mut e = vec![ZERO; diag.len()];
                e[i] = C64::new(1.0 / space.weights()[i].sqrt(), 0.0);
                kernel.push(e);
            }
        }
        let entries = diag.iter().enumerate().map(|(i, v)| (i, i, *v)).collect();
        Self::from_triplets(space, "diagonal", entries, angle, kernel)
    }

    pub fn from_descriptor(d: &OperatorDescriptor) -> Result<SectorialOperator> {
        match d {
            OperatorDescriptor::DivergenceForm {
                space,
                coefficients,
                boundary,
                power,
                scale,
            } => {
                let sp = MetricMeasureSpace::from_descriptor(space)?;
                let edges = stencil_edges(&sp, *boundary)?.len();
                let c = CoefficientField::from_descriptor(coefficients, edges)?;
                build_divergence_form(&sp, &c, *boundary)?.power(*power)?.scaled(*scale)
            }
            OperatorDescriptor::Matrix { .. } => Err(Error::Unsupported(
                "matrix operators cannot be rebuilt without their space".into(),
            )),
        }
    }

    /// `c·L` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<SectorialOperator> {
        if !(c > 0.0) {
            return invalid("operator scale must be positive");
        }
        if c == 1.0 {
            return Ok(self.clone());
        }
        let mut m = self.matrix.clone();
        m.val.iter_mut().for_each(|v| *v *= c);
        let mut d = self.descriptor.clone();
        match &mut d {
            OperatorDescriptor::DivergenceForm { scale, .. } | OperatorDescriptor::Matrix { scale, .. } => *scale *= c,
        }
        Self::assemble(
            self.space.clone(),
            m,
            self.order_2m,
            self.sector_angle,
            self.kernel.clone(),
            d,
        )
    }

    /// `L^p` as an operator of order `p·2m`.
    pub fn power(&self, p: u32) -> Result<SectorialOperator> {
        if p == 0 {
            return invalid("power must be at least 1");
        }
        if p == 1 {
            return Ok(self.clone());
        }
        let angle = self.sector_angle * p as f64;
        if angle >= std::f64::consts::FRAC_PI_2 {
            return invalid(format!("power {p} leaves the sector: angle {angle}"));
        }
        let n = self.len();
        let mut m = self.matrix.clone();
        for _ in 1..p {
            let mut trip = Vec::new();
            for i in 0..n {
                for (k, a) in m.row(i) {
                    for (j, b) in self.matrix.row(k) {
                        trip.push((i, j, a * b));
                    }
                }
            }
            m = Csr::from_triplets(n, trip);
        }
        let mut d = self.descriptor.clone();
        if let OperatorDescriptor::DivergenceForm { power, .. } = &mut d {
            *power *= p;
        }
        Self::assemble(self.space.clone(), m, self.order_2m * p, angle, self.kernel.clone(), d)
    }

    pub fn len(&self) -> usize {
        self.matrix.n
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.n == 0
    }

    pub fn space(&self) -> &MetricMeasureSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        self.space.weights()
    }

    /// Homogeneity order `2m`.
    pub fn order_2m(&self) -> u32 {
        self.order_2m
    }

    pub fn m(&self) -> f64 {
        self.order_2m as f64 / 2.0
    }

    pub fn sector_angle(&self) -> f64 {
        self.sector_angle
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    pub fn adjoint_matrix(&self) -> &Csr {
        &self.adjoint
    }

    pub fn descriptor(&self) -> &OperatorDescriptor {
        &self.descriptor
    }

    pub fn label(&self) -> String {
        serde_json::to_string(&self.descriptor).unwrap_or_default()
    }

    /// Hex sha256 of the serialized descriptor.
    pub fn descriptor_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.label().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Upper bound for `‖L‖` (max row sum).
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        self.action.matvec(f)
    }

    pub fn apply_adjoint(&self, f: &[C64]) -> Vec<C64> {
        self.adjoint_action.matvec(f)
    }

    pub fn apply_with(&self, f: &[C64], adjoint: bool) -> Vec<C64> {
        if adjoint {
            self.apply_adjoint(f)
        } else {
            self.apply(f)
        }
    }

    /// μ-orthonormal basis of `ker L`.
    pub fn kernel_basis(&self) -> &[Vec<C64>] {
        &self.kernel
    }

    /// Orthogonal projection onto `ker L`.
    pub fn project_kernel(&self, f: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; f.len()];
        for k in &self.kernel {
            let c = inner(self.weights(), f, k);
            crate::linalg::axpy(&mut out, c, k);
        }
        out
    }

    /// `Pf = f − kernel component`.
    pub fn project_range(&self, f: &[C64]) -> Vec<C64> {
        let k = self.project_kernel(f);
        f.iter().zip(&k).map(|(a, b)| a - b).collect()
    }

    /// Checks `L = L*` entrywise up to `tol·‖L‖`.
    pub fn is_self_adjoint(&self) -> bool {
        let tol = 1e-14 * self.norm_bound.max(1e-300);
        let d = self.matrix.to_dense();
        let a = self.adjoint.to_dense();
        (0..self.len()).all(|i| (0..self.len()).all(|j| (d[(i, j)] - a[(i, j)]).norm() <= tol))
    }

    /// Factors `ζ − L` (or `ζ − L*`).
    pub fn factor_resolvent(&self, zeta: C64, adjoint: bool) -> Result<ResolventFactor<'_>> {
        let a = if adjoint { &self.adjoint } else { &self.matrix };
        let n = self.len();
        let (kl, ku) = self.band;
        let kind = if (2 * kl + ku + 1) * 4 <= n || n <= 32 && (2 * kl + ku + 1) < n {
            FactorKind::Band(BandLu::factor(a, zeta, -ONE, &self.ordering, kl, ku)?)
        } else {
            let mut d = a.to_dense();
            for v in d.as_mut().col_iter_mut() {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
            for i in 0..n {
                d[(i, i)] += zeta;
            }
            FactorKind::Dense(Box::new(d.partial_piv_lu()))
        };
        Ok(ResolventFactor {
            zeta,
            a,
            kind,
            weights: self.weights(),
        })
    }

    /// `(ζ − L)⁻¹ f` with residual at most `1e-10‖f‖`.
    pub fn resolvent_apply(&self, zeta: C64, f: &[C64]) -> Result<Vec<C64>> {
        self.check_off_sector(zeta)?;
        let fac = self.factor_resolvent(zeta, false)?;
        let (g, res) = fac.solve_with_residual(f);
        let nf = norm2(self.weights(), f);
        if !(res <= 1e-10 * nf) {
            let ng = norm2(self.weights(), &g);
            return Err(Error::ResolventFailure {
                zeta,
                residual: res / nf,
                distance: if ng > 0.0 { nf / ng } else { 0.0 },
            });
        }
        Ok(g)
    }

    fn check_off_sector(&self, zeta: C64) -> Result<()> {
        if zeta == ZERO || zeta.arg().abs() <= self.sector_angle {
            return invalid(format!(
                "resolvent point {zeta} lies in the sector of angle {}",
                self.sector_angle
            ));
        }
        Ok(())
    }

    /// Measures `sup |ζ|‖(ζ − L)⁻¹‖` over rays `|arg ζ| ∈ [σ, π]` and
    /// geometric magnitudes relative to `‖L‖`.
    pub fn verify_sectoriality(
        &self,
        sigma: f64,
        ray_samples: usize,
        magnitude_samples: usize,
    ) -> Result<SectorialityReport> {
        if !(sigma > self.sector_angle) || sigma > std::f64::consts::PI {
            return invalid(format!(
                "sigma {sigma} must exceed the sector angle {}",
                self.sector_angle
            ));
        }
        let rays = ray_samples.max(1);
        let mags = magnitude_samples.max(1);
        let scale = self.norm_bound.max(1e-300);
        let mut best = SectorialityReport {
            c_sigma: 0.0,
            worst_zeta: ZERO,
        };
        for k in 0..rays {
            let phi = sigma + (std::f64::consts::PI - sigma) * k as f64 / rays as f64;
            for sgn in [1.0, -1.0] {
                for j in 0..mags {
                    let e = if mags == 1 {
                        0.0
                    } else {
                        -6.0 + 8.0 * j as f64 / (mags - 1) as f64
                    };
                    let r = scale * 10f64.powf(e);
                    let zeta = C64::from_polar(r, sgn * phi);
                    let c = r * self.resolvent_norm(zeta, 8, 20, 0x5ec7)?;
                    if c > best.c_sigma {
                        best = SectorialityReport {
                            c_sigma: c,
                            worst_zeta: zeta,
                        };
                    }
                }
            }
        }
        Ok(best)
    }

    /// Power-iteration estimate of `‖(ζ − L)⁻¹‖` in L²(μ).
    pub fn resolvent_norm(&self, zeta: C64, probes: usize, steps: usize, seed: u64) -> Result<f64> {
        let r = self.factor_resolvent(zeta, false)?;
        let rs = self.factor_resolvent(zeta.conj(), true)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.weights();
        let mut best = 0.0f64;
        for _ in 0..probes {
            let mut x = random_vector(&mut rng, self.len());
            for _ in 0..steps {
                let nx = norm2(w, &x);
                if nx == 0.0 {
                    break;
                }
                let y = r.solve(&x);
                best = best.max(norm2(w, &y) / nx);
                let z = rs.solve(&y);
                let nz = norm2(w, &z);
                if nz == 0.0 {
                    break;
                }
                x = z.into_iter().map(|v| v / nz).collect();
            }
        }
        Ok(best)
    }

    /// Estimates of the smallest nonzero and largest spectral magnitudes.
    pub fn spectral_bounds(&self) -> Result<(f64, f64)> {
        let hi = self.norm_bound.max(1e-300);
        let eta = 1e-9 * hi;
        let zeta = C64::new(-eta, 0.0);
        let r = self.factor_resolvent(zeta, false)?;
        let rs = self.factor_resolvent(zeta, true)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0xb0b);
        let w = self.weights();
        let mut x = self.project_range(&random_vector(&mut rng, self.len()));
        let mut est = 0.0f64;
        for _ in 0..40 {
            let nx = norm2(w, &x);
            if nx == 0.0 {
                break;
            }
            let y = self.project_range(&r.solve(&x));
            est = est.max(norm2(w, &y) / nx);
            let z = self.project_range(&rs.solve(&y));
            let nz = norm2(w, &z);
            if nz == 0.0 {
                break;
            }
            x = z.into_iter().map(|v| v / nz).collect();
        }
        let lo = if est > 0.0 { (1.0 / est - eta).max(1e-300) } else { hi };
        Ok((lo.min(hi), hi))
    }
}

/// Complex Gaussian vector with independent standard normal parts.
pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| {
            C64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect()
}

/// Output of [`SectorialOperator::verify_sectoriality`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorialityReport {
    pub c_sigma: f64,
    pub worst_zeta: C64,
}

enum FactorKind {
    Band(BandLu),
    Dense(Box<PartialPivLu<C64>>),
}

/// A factored resolvent `ζ − L`.
pub struct ResolventFactor<'a> {
    zeta: C64,
    a: &'a Csr,
    kind: FactorKind,
    weights: &'a [f64],
}

impl ResolventFactor<'_> {
    fn raw(&self, f: &[C64]) -> Vec<C64> {
        match &self.kind {
            FactorKind::Band(b) => b.solve(f),
            FactorKind::Dense(lu) => {
                let rhs = crate::linalg::mat_from_col(f);
                let x = lu.solve(&rhs);
                x.col_as_slice(0).to_vec()
            }
        }
    }

    fn residual(&self, f: &[C64], g: &[C64]) -> Vec<C64> {
        let ag = self.a.matvec(g);
        f.iter()
            .zip(g)
            .zip(&ag)
            .map(|((fi, gi), agi)| fi - (self.zeta * gi - agi))
            .collect()
    }

    /// Solve with one step of iterative refinement.
    pub fn solve(&self, f: &[C64]) -> Vec<C64> {
        let mut g = self.raw(f);
        let r = self.residual(f, &g);
        let d = self.raw(&r);
        for (gi, di) in g.iter_mut().zip(&d) {
            *gi += di;
        }
        g
    }

    /// Solve and report the final residual norm.
    pub fn solve_with_residual(&self, f: &[C64]) -> (Vec<C64>, f64) {
        let g = self.solve(f);
        let r = self.residual(f, &g);
        (g, norm2(self.weights, &r))
    }

    pub fn zeta(&self) -> C64 {
        self.zeta
    }
}

/// Dense eigendecomposition `L = V Λ V⁻¹`.
#[derive(Clone, Debug)]
pub struct SpectralOracle {
    pub eigenvalues: Vec<C64>,
    pub vectors: Mat<C64>,
    pub inverse: Mat<C64>,
    /// false when the eigenvector condition number exceeds 1e8 or the
    /// reconstruction check fails
    pub valid: bool,
    pub condition: f64,
    pub residual: f64,
}

/// Computes the spectral oracle of `op` within the default dense budget.
pub fn spectral_oracle(op: &SectorialOperator) -> Result<SpectralOracle> {
    spectral_oracle_with_budget(op, DEFAULT_DENSE_BUDGET)
}

pub fn spectral_oracle_with_budget(op: &SectorialOperator, budget: usize) -> Result<SpectralOracle> {
    let n = op.len();
    if n > budget {
        return Err(Error::DenseBudget { n, budget });
    }
    let a = op.matrix.to_dense();
    let w = op.weights();
    let (mut eigenvalues, vectors, inverse) = if op.is_self_adjoint() {
        // Hermitian after the similarity D^{1/2} L D^{-1/2}
        let h = Mat::<C64>::from_fn(n, n, |i, j| a[(i, j)] * (w[i].sqrt() / w[j].sqrt()));
        let h = Mat::<C64>::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Unsupported(format!("eigendecomposition failed: {e:?}")))?;
        let u = evd.U();
        let lam: Vec<C64> = evd.S().column_vector().iter().map(|v| C64::new(v.re, 0.0)).collect();
        let v = Mat::<C64>::from_fn(n, n, |i, j| u[(i, j)] / w[i].sqrt());
        let wi = Mat::<C64>::from_fn(n, n, |i, j| u[(j, i)].conj() * w[j].sqrt());
        (lam, v, wi)
    } else {
        let evd = a
            .eigen()
            .map_err(|e| Error::Unsupported(format!("eigendecomposition failed: {e:?}")))?;
        let lam: Vec<C64> = evd.S().column_vector().iter().copied().collect();
        let mut v = evd.U().to_owned();
        // unit μ-norm columns
        for j in 0..n {
            let s: f64 = (0..n).map(|i| v[(i, j)].norm_sqr() * w[i]).sum::<f64>().sqrt();
            if s > 0.0 {
                for i in 0..n {
                    v[(i, j)] /= s;
                }
            }
        }
        let inv = v.partial_piv_lu().solve(Mat::<C64>::identity(n, n));
        (lam, v, inv)
    };
    // snap kernel eigenvalues to zero
    let kdim = op.kernel.len();
    if kdim > 0 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| eigenvalues[i].norm().total_cmp(&eigenvalues[j].norm()));
        for &i in idx.iter().take(kdim) {
            if eigenvalues[i].norm() <= 1e-8 * op.norm_bound {
                eigenvalues[i] = ZERO;
            }
        }
    }
    let sv = |m: &Mat<C64>| -> f64 {
        match m.singular_values() {
            Ok(s) => s.first().copied().unwrap_or(0.0),
            Err(_) => f64::INFINITY,
        }
    };
    let condition = sv(&vectors) * sv(&inverse);
    let mut recon = vectors.clone();
    for j in 0..n {
        for i in 0..n {
            recon[(i, j)] *= eigenvalues[j];
        }
    }
    let recon = &recon * &inverse;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            num += (recon[(i, j)] - a[(i, j)]).norm_sqr();
            den += a[(i, j)].norm_sqr();
        }
    }
    let residual = (num / den.max(1e-300)).sqrt();
    let valid = condition.is_finite() && condition <= 1e8 && residual <= 1e-10;
    Ok(SpectralOracle {
        eigenvalues,
        vectors,
        inverse,
        valid,
        condition,
        residual,
    })
}

const ORACLE_MAGIC: &[u8; 8] = b"PLORACL1";

impl SpectralOracle {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Writes the oracle as little-endian complex128 blocks tagged by `key`.
    pub fn save(&self, path: &Path, key: &str) -> Result<()> {
        let n = self.len();
        let mut buf = Vec::with_capacity(64 + 16 * n * (2 * n + 1));
        buf.extend_from_slice(ORACLE_MAGIC);
        let kb = key.as_bytes();
        buf.extend_from_slice(&(kb.len() as u64).to_le_bytes());
        buf.extend_from_slice(kb);
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        buf.push(self.valid as u8);
        buf.extend_from_slice(&self.condition.to_le_bytes());
        buf.extend_from_slice(&self.residual.to_le_bytes());
        let mut put = |v: C64| {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        };
        for v in &self.eigenvalues {
            put(*v);
        }
        for m in [&self.vectors, &self.inverse] {
            for j in 0..n {
                for i in 0..n {
                    put(m[(i, j)]);
                }
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    /// Reads an oracle written by [`save`](Self::save); fails if the key differs.
    pub fn load(path: &Path, key: &str) -> Result<SpectralOracle> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let bad = || Error::Config(format!("corrupt oracle cache {}", path.display()));
        let mut pos = 0usize;
        let mut take = |k: usize| -> Result<&[u8]> {
            let s = buf.get(pos..pos + k).ok_or_else(bad)?;
            pos += k;
            Ok(s)
        };
        if take(8)? != ORACLE_MAGIC {
            return Err(bad());
        }
        let kl = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        if take(kl)? != key.as_bytes() {
            return Err(Error::Config("oracle cache key mismatch".into()));
        }
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let valid = take(1)?[0] != 0;
        let condition = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let residual = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let mut get = || -> Result<C64> {
            let s = take(16)?;
            Ok(C64::new(
                f64::from_le_bytes(s[..8].try_into().unwrap()),
                f64::from_le_bytes(s[8..].try_into().unwrap()),
            ))
        };
        let eigenvalues = (0..n).map(|_| get()).collect::<Result<Vec<_>>>()?;
        let mut mats = Vec::new();
        for _ in 0..2 {
            let mut m = Mat::<C64>::zeros(n, n);
            for j in 0..n {
                for i in 0..n {
                    m[(i, j)] = get()?;
                }
            }
            mats.push(m);
        }
        let inverse = mats.pop().unwrap();
        let vectors = mats.pop().unwrap();
        Ok(SpectralOracle {
            eigenvalues,
            vectors,
            inverse,
            valid,
            condition,
            residual,
        })
    }
}

/// Loads the oracle for `op` from `dir` or computes and stores it.
pub fn spectral_oracle_cached(op: &SectorialOperator, dir: &Path) -> Result<SpectralOracle> {
    let key = op.descriptor_hash();
    let path: PathBuf = dir.join(format!("{key}.oracle"));
    if path.exists() {
        if let Ok(o) = SpectralOracle::load(&path, &key) {
            return Ok(o);
        }
    }
    let o = spectral_oracle(op)?;
    std::fs::create_dir_all(dir)?;
    o.save(&path, &key)?;
    Ok(o)
}

//! Finite spaces of homogeneous type: weighted point sets with a metric,
//! open balls, dyadic annuli, doubling diagnostics and ball averages.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::ops::{Add, Sub};

use crate::error::{invalid, Error, Result};
use crate::linalg::linear_fit;

/// Default cap on the number of grid points.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Periodic,
    Bounded,
}

/// Serializable description of a space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceDescriptor {
    Grid {
        dims: Vec<usize>,
        spacing: f64,
        topology: Topology,
        #[serde(default)]
        base_point: usize,
    },
    Explicit {
        dist: Vec<Vec<f64>>,
        weights: Vec<f64>,
        ambient_dim: usize,
        #[serde(default)]
        base_point: usize,
    },
}

/// An open ball `B(center, radius) = {y : d(y, center) < radius}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: usize, radius: f64) -> Result<Ball> {
        if !(radius > 0.0) {
            return invalid(format!("ball radius must be positive, got {radius}"));
        }
        Ok(Ball { center, radius })
    }

    /// The concentric ball with radius scaled by `c`.
    pub fn dilate(&self, c: f64) -> Ball {
        Ball {
            center: self.center,
            radius: self.radius * c,
        }
    }
}

#[derive(Clone, Debug)]
struct Grid {
    dims: Vec<usize>,
    spacing: f64,
    topology: Topology,
    strides: Vec<usize>,
    /// offsets in all but the last axis, sorted by step length
    outer: Vec<(Vec<i64>, u32)>,
    max_steps: u32,
}

#[derive(Clone, Debug)]
struct Explicit {
    dist: Vec<f64>,
    /// per point: (distance, index) sorted ascending
    sorted: Vec<Vec<(f64, usize)>>,
}

#[derive(Clone, Debug)]
enum Geometry {
    Grid(Grid),
    Explicit(Explicit),
}

/// A finite metric measure space.
#[derive(Clone, Debug)]
pub struct MetricMeasureSpace {
    geometry: Geometry,
    weights: Vec<f64>,
    ambient_dim: usize,
    base_point: usize,
}

/// Output of [`MetricMeasureSpace::doubling_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub a1: f64,
    pub a2: f64,
    pub n: f64,
    pub zero_variance: bool,
    pub samples: usize,
}

/// Builds a regular grid with the wrap-aware ℓ¹ graph metric.
pub fn build_grid_space(dims: &[usize], spacing: f64, topology: Topology) -> Result<MetricMeasureSpace> {
    build_grid_space_with_budget(dims, spacing, topology, DEFAULT_NODE_BUDGET)
}

pub fn build_grid_space_with_budget(
    dims: &[usize],
    spacing: f64,
    topology: Topology,
    budget: usize,
) -> Result<MetricMeasureSpace> {
    if dims.is_empty() {
        return invalid("empty dims");
    }
    if dims.contains(&0) {
        return invalid("grid dimensions must be positive");
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return invalid(format!("spacing must be positive, got {spacing}"));
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .unwrap_or(usize::MAX);
    if n > budget {
        return Err(Error::NodeBudget { requested: n, budget });
    }
    let d = dims.len();
    let mut strides = vec![1usize; d];
    for k in (0..d - 1).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let axis_range = |len: usize| -> Vec<i64> {
        match topology {
            Topology::Periodic => {
                let lo = -(((len - 1) / 2) as i64);
                let hi = (len / 2) as i64;
                (lo..=hi).collect()
            }
            Topology::Bounded => (-(len as i64 - 1)..=(len as i64 - 1)).collect(),
        }
    };
    let mut outer: Vec<(Vec<i64>, u32)> = vec![(Vec::new(), 0)];
    for &len in &dims[..d - 1] {
        let mut next = Vec::new();
        for (o, s) in &outer {
            for v in axis_range(len) {
                let mut o2 = o.clone();
                o2.push(v);
                next.push((o2, s + v.unsigned_abs() as u32));
            }
        }
        outer = next;
    }
    outer.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let max_steps = dims
        .iter()
        .map(|&len| match topology {
            Topology::Periodic => (len / 2) as u32,
            Topology::Bounded => (len - 1) as u32,
        })
        .sum();
    let w = spacing.powi(d as i32);
    Ok(MetricMeasureSpace {
        geometry: Geometry::Grid(Grid {
            dims: dims.to_vec(),
            spacing,
            topology,
            strides,
            outer,
            max_steps,
        }),
        weights: vec![w; n],
        ambient_dim: d,
        base_point: 0,
    })
}

/// Builds a space from an explicit distance matrix and weights.
pub fn build_explicit_space(dist: Vec<Vec<f64>>, weights: Vec<f64>, ambient_dim: usize) -> Result<MetricMeasureSpace> {
    let n = dist.len();
    if n == 0 || weights.len() != n {
        return invalid("distance matrix and weights must be nonempty and of equal size");
    }
    if ambient_dim == 0 {
        return invalid("ambient dimension must be positive");
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return invalid("weights must be strictly positive");
    }
    for (i, row) in dist.iter().enumerate() {
        if row.len() != n {
            return invalid("distance matrix must be square");
        }
        if row[i] != 0.0 {
            return invalid(format!("d({i},{i}) must be 0"));
        }
        for j in 0..n {
            if !(row[j] >= 0.0) || row[j] != dist[j][i] || (i != j && row[j] == 0.0) {
                return invalid(format!("distance ({i},{j}) is not a symmetric positive value"));
            }
        }
    }
    let flat: Vec<f64> = dist.iter().flatten().copied().collect();
    let sorted = (0..n)
        .map(|i| {
            let mut v: Vec<(f64, usize)> = (0..n).map(|j| (flat[i * n + j], j)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        })
        .collect();
    Ok(MetricMeasureSpace {
        geometry: Geometry::Explicit(Explicit { dist: flat, sorted }),
        weights,
        ambient_dim,
        base_point: 0,
    })
}

/// Ball sums along grid lines using prefix sums on the last axis.
trait Summable: Copy + Add<Output = Self> + Sub<Output = Self> {
    fn zero() -> Self;
}
impl Summable for f64 {
    fn zero() -> Self {
        0.0
    }
}
impl Summable for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
}

impl MetricMeasureSpace {
    pub fn from_descriptor(d: &SpaceDescriptor) -> Result<MetricMeasureSpace> {
        match d {
            SpaceDescriptor::Grid {
                dims,
                spacing,
                topology,
                base_point,
            } => build_grid_space(dims, *spacing, *topology)?.with_base_point(*base_point),
            SpaceDescriptor::Explicit {
                dist,
                weights,
                ambient_dim,
                base_point,
            } => build_explicit_space(dist.clone(), weights.clone(), *ambient_dim)?.with_base_point(*base_point),
        }
    }

    pub fn descriptor(&self) -> SpaceDescriptor {
        match &self.geometry {
            Geometry::Grid(g) => SpaceDescriptor::Grid {
                dims: g.dims.clone(),
                spacing: g.spacing,
                topology: g.topology,
                base_point: self.base_point,
            },
            Geometry::Explicit(e) => {
                let n = self.len();
                SpaceDescriptor::Explicit {
                    dist: (0..n).map(|i| e.dist[i * n..(i + 1) * n].to_vec()).collect(),
                    weights: self.weights.clone(),
                    ambient_dim: self.ambient_dim,
                    base_point: self.base_point,
                }
            }
        }
    }

    /// Chooses which point plays the role of the origin.
    pub fn with_base_point(mut self, p: usize) -> Result<Self> {
        if p >= self.len() {
            return invalid(format!("base point {p} out of range"));
        }
        self.base_point = p;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn base_point(&self) -> usize {
        self.base_point
    }

    pub fn topology(&self) -> Option<Topology> {
        match &self.geometry {
            Geometry::Grid(g) => Some(g.topology),
            Geometry::Explicit(_) => None,
        }
    }

    pub fn dims(&self) -> Option<&[usize]> {
        match &self.geometry {
            Geometry::Grid(g) => Some(&g.dims),
            Geometry::Explicit(_) => None,
        }
    }

    /// Smallest nonzero distance between points.
    pub fn min_spacing(&self) -> f64 {
        match &self.geometry {
            Geometry::Grid(g) => g.spacing,
            Geometry::Explicit(e) => e
                .sorted
                .iter()
                .filter_map(|row| row.get(1).map(|p| p.0))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Largest distance between two points.
    pub fn diam(&self) -> f64 {
        match &self.geometry {
            Geometry::Grid(g) => g.max_steps as f64 * g.spacing,
            Geometry::Explicit(e) => e.dist.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn coords(&self, x: usize) -> Vec<usize> {
        match &self.geometry {
            Geometry::Grid(g) => g.strides.iter().zip(&g.dims).map(|(s, d)| (x / s) % d).collect(),
            Geometry::Explicit(_) => vec![x],
        }
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        match &self.geometry {
            Geometry::Grid(g) => coords.iter().zip(&g.strides).map(|(c, s)| c * s).sum(),
            Geometry::Explicit(_) => coords[0],
        }
    }

    pub fn dist(&self, x: usize, y: usize) -> f64 {
        match &self.geometry {
            Geometry::Grid(g) => self.grid_steps(g, x, y) as f64 * g.spacing,
            Geometry::Explicit(e) => e.dist[x * self.len() + y],
        }
    }

    fn grid_steps(&self, g: &Grid, x: usize, y: usize) -> u32 {
        let mut s = 0u32;
        for (st, &len) in g.strides.iter().zip(&g.dims) {
            let a = (x / st) % len;
            let b = (y / st) % len;
            let dlt = a.abs_diff(b);
            s += match g.topology {
                Topology::Periodic => dlt.min(len - dlt) as u32,
                Topology::Bounded => dlt as u32,
            };
        }
        s
    }

    /// Largest step count `s` with `s·spacing < r`.
    fn max_steps_below(g: &Grid, r: f64) -> Option<u32> {
        if !(r > 0.0) {
            return None;
        }
        let mut s = (r / g.spacing).ceil() - 1.0;
        if s < 0.0 {
            s = 0.0;
        }
        let mut s = if s > g.max_steps as f64 { g.max_steps } else { s as u32 };
        while s < g.max_steps && ((s + 1) as f64) * g.spacing < r {
            s += 1;
        }
        while s > 0 && (s as f64) * g.spacing >= r {
            s -= 1;
        }
        Some(s)
    }

    /// Calls `f(y)` for every point of the open ball.
    pub fn for_each_in_ball(&self, ball: &Ball, mut f: impl FnMut(usize)) {
        match &self.geometry {
            Geometry::Explicit(e) => {
                for &(d, j) in &e.sorted[ball.center] {
                    if d >= ball.radius {
                        break;
                    }
                    f(j);
                }
            }
            Geometry::Grid(g) => {
                let Some(smax) = Self::max_steps_below(g, ball.radius) else {
                    return;
                };
                let c = self.coords(ball.center);
                let d = g.dims.len();
                let last = g.dims[d - 1];
                for (off, s) in &g.outer {
                    if *s > smax {
                        break;
                    }
                    let Some(base) = self.shift_outer(g, &c, off) else {
                        continue;
                    };
                    let h = (smax - s) as usize;
                    let cl = c[d - 1];
                    match g.topology {
                        Topology::Periodic => {
                            if 2 * h + 1 >= last {
                                for k in 0..last {
                                    f(base + k);
                                }
                            } else {
                                for k in 0..=2 * h {
                                    f(base + (cl + last + k - h) % last);
                                }
                            }
                        }
                        Topology::Bounded => {
                            let lo = cl.saturating_sub(h);
                            let hi = (cl + h).min(last - 1);
                            for k in lo..=hi {
                                f(base + k);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Index of the point obtained by shifting all but the last coordinate,
    /// with last coordinate 0, or `None` if it leaves a bounded domain.
    fn shift_outer(&self, g: &Grid, c: &[usize], off: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (k, o) in off.iter().enumerate() {
            let len = g.dims[k] as i64;
            let v = c[k] as i64 + o;
            let v = match g.topology {
                Topology::Periodic => v.rem_euclid(len),
                Topology::Bounded => {
                    if v < 0 || v >= len {
                        return None;
                    }
                    v
                }
            };
            idx += v as usize * g.strides[k];
        }
        Some(idx)
    }

    pub fn ball_points(&self, ball: &Ball) -> Vec<usize> {
        let mut v = Vec::new();
        self.for_each_in_ball(ball, |y| v.push(y));
        v.sort_unstable();
        v
    }

    /// `V(x, r) = μ(B(x, r))`.
    pub fn ball_volume(&self, ball: &Ball) -> f64 {
        if let Geometry::Grid(g) = &self.geometry {
            if g.topology == Topology::Periodic {
                if let Some(s) = Self::max_steps_below(g, ball.radius) {
                    return self.periodic_count(g, s) as f64 * self.weights[0];
                }
            }
        }
        let mut v = 0.0;
        self.for_each_in_ball(ball, |y| v += self.weights[y]);
        v
    }

    fn periodic_count(&self, g: &Grid, smax: u32) -> usize {
        let last = *g.dims.last().unwrap();
        g.outer
            .iter()
            .take_while(|(_, s)| *s <= smax)
            .map(|(_, s)| (2 * (smax - s) as usize + 1).min(last))
            .sum()
    }

    pub fn volume(&self, x: usize, r: f64) -> f64 {
        self.ball_volume(&Ball { center: x, radius: r })
    }

    /// `V(x, r)` for every center `x`.
    pub fn volumes(&self, r: f64) -> Vec<f64> {
        if let Geometry::Grid(g) = &self.geometry {
            if g.topology == Topology::Periodic {
                let v = self.volume(0, r);
                return vec![v; self.len()];
            }
        }
        let w = self.weights.clone();
        self.ball_sums(r, &w)
    }

    /// Dyadic annulus `S_j(B)`.
    pub fn annulus(&self, ball: &Ball, j: u32) -> Vec<usize> {
        if j == 0 {
            return self.ball_points(ball);
        }
        let lo = ball.radius * 2f64.powi(j as i32 - 1);
        let hi = ball.radius * 2f64.powi(j as i32);
        let mut v: Vec<usize> = self
            .ball_points(&Ball {
                center: ball.center,
                radius: hi,
            })
            .into_iter()
            .filter(|&y| self.dist(y, ball.center) >= lo)
            .collect();
        v.sort_unstable();
        v
    }

    /// `Σ_{y ∈ B(x, r)} v(y)` for every `x`.
    pub fn ball_sums(&self, r: f64, v: &[f64]) -> Vec<f64> {
        self.ball_sums_generic(r, v)
    }

    pub fn ball_sums_complex(&self, r: f64, v: &[C64]) -> Vec<C64> {
        self.ball_sums_generic(r, v)
    }

    fn ball_sums_generic<T: Summable>(&self, r: f64, v: &[T]) -> Vec<T> {
        let n = self.len();
        match &self.geometry {
            Geometry::Explicit(e) => (0..n)
                .map(|x| {
                    let mut s = T::zero();
                    for &(d, j) in &e.sorted[x] {
                        if d >= r {
                            break;
                        }
                        s = s + v[j];
                    }
                    s
                })
                .collect(),
            Geometry::Grid(g) => {
                let Some(smax) = Self::max_steps_below(g, r) else {
                    return vec![T::zero(); n];
                };
                if smax == 0 {
                    return v.to_vec();
                }
                if smax >= g.max_steps {
                    let tot = v.iter().fold(T::zero(), |a, b| a + *b);
                    return vec![tot; n];
                }
                let d = g.dims.len();
                let last = g.dims[d - 1];
                let lines = n / last;
                // prefix[l][k] = sum of the first k entries of line l (doubled for wrap)
                let plen = 2 * last + 1;
                let mut prefix = vec![T::zero(); lines * plen];
                for l in 0..lines {
                    let p = &mut prefix[l * plen..(l + 1) * plen];
                    for k in 0..2 * last {
                        p[k + 1] = p[k] + v[l * last + k % last];
                    }
                }
                let mut out = vec![T::zero(); n];
                for (x, o) in out.iter_mut().enumerate() {
                    let c = self.coords(x);
                    let cl = c[d - 1];
                    let mut s = T::zero();
                    for (off, st) in &g.outer {
                        if *st > smax {
                            break;
                        }
                        let Some(base) = self.shift_outer(g, &c, off) else {
                            continue;
                        };
                        let p = &prefix[(base / last) * plen..(base / last + 1) * plen];
                        let h = (smax - st) as usize;
                        s = s + match g.topology {
                            Topology::Periodic => {
                                if 2 * h + 1 >= last {
                                    p[last]
                                } else {
                                    let a = (cl + last - h) % last;
                                    p[a + 2 * h + 1] - p[a]
                                }
                            }
                            Topology::Bounded => {
                                let lo = cl.saturating_sub(h);
                                let hi = (cl + h).min(last - 1);
                                p[hi + 1] - p[lo]
                            }
                        };
                    }
                    *o = s;
                }
                out
            }
        }
    }

    /// Ball average `A_t f(x) = V(x,t)⁻¹ Σ_{d(y,x)<t} μ_y f(y)`.
    pub fn average(&self, t: f64, f: &[C64]) -> Vec<C64> {
        let wf: Vec<C64> = f.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
        let s = self.ball_sums_complex(t, &wf);
        let v = self.volumes(t);
        s.into_iter().zip(v).map(|(a, b)| a / b).collect()
    }

    /// Ball average of a real function.
    pub fn average_real(&self, t: f64, f: &[f64]) -> Vec<f64> {
        let wf: Vec<f64> = f.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
        let s = self.ball_sums(t, &wf);
        let v = self.volumes(t);
        s.into_iter().zip(v).map(|(a, b)| a / b).collect()
    }

    /// μ-adjoint of [`average`](Self::average):
    /// `A*_t g(y) = μ_y⁻¹ Σ_{d(x,y)<t} μ_x g(x) / V(x,t) · μ_y`.
    pub fn average_adjoint(&self, t: f64, g: &[C64]) -> Vec<C64> {
        let v = self.volumes(t);
        let h: Vec<C64> = g
            .iter()
            .zip(&self.weights)
            .zip(&v)
            .map(|((a, w), vol)| a * (w / vol))
            .collect();
        self.ball_sums_complex(t, &h)
    }

    /// μ-weighted mean.
    pub fn mean(&self, f: &[C64]) -> C64 {
        let s: C64 = f.iter().zip(&self.weights).map(|(a, w)| a * w).sum();
        s / self.total_measure()
    }

    /// Nearest-neighbour graph of the grid (steps of one spacing).
    pub fn neighbors(&self, x: usize) -> Vec<usize> {
        match &self.geometry {
            Geometry::Grid(g) => {
                let c = self.coords(x);
                let mut v = Vec::with_capacity(2 * c.len());
                for k in 0..c.len() {
                    let len = g.dims[k];
                    if len == 1 {
                        continue;
                    }
                    for dir in [-1i64, 1] {
                        let w = c[k] as i64 + dir;
                        let w = match g.topology {
                            Topology::Periodic => w.rem_euclid(len as i64),
                            Topology::Bounded => {
                                if w < 0 || w >= len as i64 {
                                    continue;
                                }
                                w
                            }
                        };
                        let y = x - c[k] * g.strides[k] + w as usize * g.strides[k];
                        if !v.contains(&y) {
                            v.push(y);
                        }
                    }
                }
                v
            }
            Geometry::Explicit(_) => Vec::new(),
        }
    }

    /// For each point of `ball`, its distance to the complement of the
    /// ball; `None` when the complement is empty.
    pub fn depths(&self, ball: &Ball) -> Option<Vec<(usize, f64)>> {
        let pts = self.ball_points(ball);
        if pts.len() == self.len() {
            return None;
        }
        match &self.geometry {
            Geometry::Grid(g) => {
                let mut inside = vec![false; self.len()];
                for &p in &pts {
                    inside[p] = true;
                }
                let mut dist = vec![u32::MAX; self.len()];
                let mut queue = VecDeque::new();
                for (y, &ins) in inside.iter().enumerate() {
                    if !ins {
                        dist[y] = 0;
                        queue.push_back(y);
                    }
                }
                while let Some(y) = queue.pop_front() {
                    for z in self.neighbors(y) {
                        if dist[z] == u32::MAX {
                            dist[z] = dist[y] + 1;
                            queue.push_back(z);
                        }
                    }
                }
                Some(pts.iter().map(|&p| (p, dist[p] as f64 * g.spacing)).collect())
            }
            Geometry::Explicit(e) => {
                let n = self.len();
                let mut inside = vec![false; n];
                for &p in &pts {
                    inside[p] = true;
                }
                Some(
                    pts.iter()
                        .map(|&p| {
                            let d = (0..n)
                                .filter(|&z| !inside[z])
                                .map(|z| e.dist[p * n + z])
                                .fold(f64::INFINITY, f64::min);
                            (p, d)
                        })
                        .collect(),
                )
            }
        }
    }

    /// On periodic grids, the point `y + (to - from)`.
    pub fn translate(&self, y: usize, from: usize, to: usize) -> Option<usize> {
        match &self.geometry {
            Geometry::Grid(g) if g.topology == Topology::Periodic => {
                let (cy, cf, ct) = (self.coords(y), self.coords(from), self.coords(to));
                let mut idx = 0;
                for k in 0..cy.len() {
                    let len = g.dims[k];
                    idx += ((cy[k] + ct[k] + len - cf[k]) % len) * g.strides[k];
                }
                Some(idx)
            }
            _ => None,
        }
    }

    pub fn is_periodic_grid(&self) -> bool {
        matches!(&self.geometry, Geometry::Grid(g) if g.topology == Topology::Periodic)
    }

    /// Doubling diagnostics over a deterministic sample of centers and radii.
    pub fn doubling_report(&self, samples: usize) -> Result<DoublingReport> {
        if samples == 0 {
            return invalid("samples must be at least 1");
        }
        let n = self.len();
        let h = self.min_spacing().min(f64::MAX);
        let h = if h.is_finite() { h } else { 1.0 };
        let diam = self.diam();
        let step = (n / samples.min(n)).max(1);
        let centers: Vec<usize> = (0..n).step_by(step).take(samples).collect();
        let lambdas = [2.0, 3.0, 4.0];
        let mut radii = Vec::new();
        let mut r = 1.5 * h;
        while r * 2.0 <= diam.max(0.0) / 2.0 + 1e-12 {
            radii.push(r);
            r = 2.0 * r - 0.5 * h;
        }
        if radii.is_empty() {
            radii.push(1.5 * h);
        }
        let mut a1 = 1.0f64;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ratios = Vec::new();
        for &x in &centers {
            for &r in &radii {
                let v = self.volume(x, r);
                a1 = a1.max(self.volume(x, 2.0 * r) / v);
                for &lam in &lambdas {
                    if lam * r > diam / 2.0 + 1e-12 && radii.len() > 1 {
                        continue;
                    }
                    let ratio = self.volume(x, lam * r) / v;
                    xs.push(f64::ln(lam));
                    ys.push(ratio.ln());
                    ratios.push((lam, ratio));
                }
            }
        }
        let first = ratios.first().map(|p| p.1).unwrap_or(1.0);
        let zero_variance = ratios.iter().all(|p| (p.1 - first).abs() <= 1e-12 * first);
        let nfit = if zero_variance {
            0.0
        } else {
            linear_fit(&xs, &ys).map(|p| p.0).unwrap_or(0.0)
        };
        let a2 = ratios
            .iter()
            .map(|(lam, ratio)| ratio / lam.powf(nfit))
            .fold(1.0f64, f64::max);
        Ok(DoublingReport {
            a1,
            a2,
            n: nfit,
            zero_variance,
            samples: ratios.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ring(n: usize) -> MetricMeasureSpace {
        build_grid_space(&[n], 1.0, Topology::Periodic).unwrap()
    }

    #[test]
    fn wrap_distance() {
        let s = ring(8);
        assert_eq!(s.len(), 8);
        assert!(s.weights().iter().all(|&w| w == 1.0));
        assert_eq!(s.dist(0, 7), 1.0);
        assert_eq!(s.dist(0, 4), 4.0);
    }

    #[test]
    fn bounded_square_weights() {
        let s = build_grid_space(&[4, 4], 0.5, Topology::Bounded).unwrap();
        assert!(s.weights().iter().all(|&w| w == 0.25));
        assert_eq!(s.dist(0, 1), 0.5);
        assert_eq!(s.dist(0, 4), 0.5);
        assert_eq!(s.dist(0, 15), 3.0);
    }

    #[test]
    fn errors() {
        assert!(build_grid_space(&[], 1.0, Topology::Periodic).is_err());
        assert!(build_grid_space(&[4], 0.0, Topology::Periodic).is_err());
        assert!(matches!(
            build_grid_space_with_budget(&[100, 100], 1.0, Topology::Periodic, 1000),
            Err(Error::NodeBudget { .. })
        ));
    }

    #[test]
    fn volumes_of_small_balls() {
        let s = ring(8);
        assert_eq!(s.volume(3, 2.5), 5.0);
        assert_eq!(s.volume(3, 0.5), 1.0);
        assert_eq!(s.volume(3, 2.0), 3.0);
        assert_eq!(s.volume(3, 100.0), 8.0);
    }

    #[test]
    fn annulus_shells() {
        let s = ring(64);
        let b = Ball::new(10, 2.0).unwrap();
        let a = s.annulus(&b, 2);
        let mut want: Vec<usize> = (0..64)
            .filter(|&y| {
                let d = s.dist(y, 10);
                (4.0..8.0).contains(&d)
            })
            .collect();
        want.sort();
        assert_eq!(a, want);
        assert_eq!(s.annulus(&b, 0), s.ball_points(&b));
        let mut all: Vec<usize> = (0..=4).flat_map(|j| s.annulus(&b, j)).collect();
        all.sort();
        assert_eq!(all, s.ball_points(&b.dilate(16.0)));
    }

    #[test]
    fn average_of_spike() {
        let s = ring(16);
        let mut f = vec![C64::new(0.0, 0.0); 16];
        f[5] = C64::new(1.0, 0.0);
        let a = s.average(2.5, &f);
        assert!((a[5].re - 0.2).abs() < 1e-15);
    }

    #[test]
    fn doubling_exponents() {
        let r1 = ring(128).doubling_report(16).unwrap();
        assert!(r1.n > 0.8 && r1.n < 1.2, "{r1:?}");
        assert!(r1.a1 >= 1.0);
        let r64 = ring(64).doubling_report(8).unwrap();
        assert!((r64.n - 1.0).abs() <= 0.2, "{r64:?}");
        let s2 = build_grid_space(&[32, 32], 1.0, Topology::Periodic).unwrap();
        let r2 = s2.doubling_report(16).unwrap();
        assert!(r2.n > 1.7 && r2.n < 2.3, "{r2:?}");
        let one = build_grid_space(&[1], 1.0, Topology::Periodic).unwrap();
        let r0 = one.doubling_report(1).unwrap();
        assert_eq!(r0.a1, 1.0);
        assert!(r0.zero_variance);
    }

    #[test]
    fn ball_growth_2d_bounded_by_measured_a2() {
        let s = build_grid_space(&[12, 12], 1.0, Topology::Bounded).unwrap();
        let rep = s.doubling_report(144).unwrap();
        // exhaustive over centers and grid radii
        let mut worst = 0.0f64;
        for x in 0..s.len() {
            for k in 1..6 {
                let r = k as f64 + 0.5;
                for lam in [2.0, 3.0] {
                    worst = worst.max(s.volume(x, lam * r) / s.volume(x, r) / (lam * lam));
                }
            }
        }
        assert!(worst.is_finite() && worst <= 4.0 * rep.a1, "{worst} {rep:?}");
    }

    #[test]
    fn ball_sums_match_enumeration() {
        for (dims, top) in [
            (vec![9usize], Topology::Periodic),
            (vec![6, 5], Topology::Periodic),
            (vec![5, 4], Topology::Bounded),
            (vec![3, 4, 3], Topology::Periodic),
        ] {
            let s = build_grid_space(&dims, 0.7, top).unwrap();
            let v: Vec<f64> = (0..s.len()).map(|i| (i as f64 * 1.3).sin()).collect();
            for r in [0.3, 0.7, 1.0, 1.5, 2.2, 3.5, 100.0] {
                let fast = s.ball_sums(r, &v);
                for x in 0..s.len() {
                    let slow: f64 = (0..s.len()).filter(|&y| s.dist(x, y) < r).map(|y| v[y]).sum();
                    assert!((fast[x] - slow).abs() < 1e-12, "{dims:?} {r} {x}");
                }
            }
        }
    }

    #[test]
    fn depths_match_brute_force() {
        let s = build_grid_space(&[7, 6], 1.0, Topology::Periodic).unwrap();
        let b = Ball::new(9, 2.5).unwrap();
        let d = s.depths(&b).unwrap();
        for (y, dy) in d {
            let brute = (0..s.len())
                .filter(|&z| s.dist(z, 9) >= 2.5)
                .map(|z| s.dist(y, z))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(dy, brute);
        }
        assert!(s.depths(&Ball::new(0, 100.0).unwrap()).is_none());
    }

    #[test]
    fn explicit_space_roundtrip() {
        let d = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        let s = build_explicit_space(d, vec![1.0, 2.0, 1.0], 1).unwrap();
        assert_eq!(s.volume(1, 1.5), 4.0);
        let back = MetricMeasureSpace::from_descriptor(&s.descriptor()).unwrap();
        assert_eq!(back.volume(0, 2.5), 4.0);
        let c = vec![C64::new(3.0, 1.0); 3];
        assert!(s.average(1.5, &c).iter().all(|v| (v - c[0]).norm() < 1e-15));
    }

    proptest! {
        #[test]
        fn metric_axioms(n1 in 1usize..7, n2 in 1usize..7, per in any::<bool>(), a in 0usize..49, b in 0usize..49, c in 0usize..49) {
            let top = if per { Topology::Periodic } else { Topology::Bounded };
            let s = build_grid_space(&[n1, n2], 1.0, top).unwrap();
            let n = s.len();
            let (a, b, c) = (a % n, b % n, c % n);
            prop_assert_eq!(s.dist(a, a), 0.0);
            prop_assert_eq!(s.dist(a, b), s.dist(b, a));
            prop_assert!(s.dist(a, c) <= s.dist(a, b) + s.dist(b, c));
        }

        #[test]
        fn averages_contract_and_fix_constants(vals in proptest::collection::vec(-5.0f64..5.0, 20), t in 0.1f64..15.0) {
            let s = build_grid_space(&[5, 4], 1.0, Topology::Bounded).unwrap();
            let f: Vec<C64> = vals.iter().enumerate().map(|(i, v)| C64::new(*v, (i as f64).cos())).collect();
            let a = s.average(t, &f);
            let sup = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
            prop_assert!(a.iter().all(|v| v.norm() <= sup + 1e-12));
            let one = vec![C64::new(1.0, 0.0); 20];
            prop_assert!(s.average(t, &one).iter().all(|v| (v - one[0]).norm() < 1e-14));
            // Cauchy–Schwarz for ball averages
            let sq: Vec<f64> = f.iter().map(|v| v.norm_sqr()).collect();
            let msq = s.average_real(t, &sq);
            for x in 0..20 {
                prop_assert!(a[x].norm_sqr() <= msq[x] + 1e-12);
            }
        }

        #[test]
        fn volume_monotone(x in 0usize..30, r in 0.1f64..10.0, dr in 0.0f64..5.0) {
            let s = ring(30);
            prop_assert!(s.volume(x, r) <= s.volume(x, r + dr));
        }

        #[test]
        fn average_adjoint_pairs(vals in proptest::collection::vec(-1.0f64..1.0, 40), t in 0.5f64..6.0) {
            let s = build_grid_space(&[8, 5], 1.0, Topology::Bounded).unwrap();
            let f: Vec<C64> = vals.iter().map(|v| C64::new(*v, v * v)).collect();
            let g: Vec<C64> = vals.iter().rev().map(|v| C64::new(v.sin(), 1.0)).collect();
            let w = s.weights();
            let l = crate::linalg::inner(w, &s.average(t, &f), &g);
            let r = crate::linalg::inner(w, &f, &s.average_adjoint(t, &g));
            prop_assert!((l - r).norm() < 1e-12);
        }
    }

    #[test]
    fn large_balls_give_mean() {
        let s = build_grid_space(&[6, 6], 1.0, Topology::Periodic).unwrap();
        let f: Vec<C64> = (0..36).map(|i| C64::new(i as f64, 0.0)).collect();
        let a = s.average(s.diam() + 1.0, &f);
        let m = s.mean(&f);
        assert!(a.iter().all(|v| (v - m).norm() < 1e-12));
    }
}

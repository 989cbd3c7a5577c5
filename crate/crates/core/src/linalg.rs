//! Small dense and banded linear-algebra helpers shared by the modules.

use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// `⟨u, v⟩_μ = Σ μ_i u_i conj(v_i)`.
pub fn inner(w: &[f64], u: &[C64], v: &[C64]) -> C64 {
    u.iter()
        .zip(v)
        .zip(w)
        .fold(ZERO, |acc, ((a, b), m)| acc + a * b.conj() * *m)
}

/// Weighted L² norm.
pub fn norm2(w: &[f64], u: &[C64]) -> f64 {
    u.iter().zip(w).map(|(a, m)| a.norm_sqr() * m).sum::<f64>().sqrt()
}

/// Weighted L^p norm, `p = f64::INFINITY` gives the max norm.
pub fn norm_p(w: &[f64], u: &[C64], p: f64) -> f64 {
    if p.is_infinite() {
        return norm_inf(u);
    }
    if p == 2.0 {
        return norm2(w, u);
    }
    u.iter()
        .zip(w)
        .map(|(a, m)| a.norm().powf(p) * m)
        .sum::<f64>()
        .powf(1.0 / p)
}

pub fn norm_inf(u: &[C64]) -> f64 {
    u.iter().fold(0.0f64, |m, a| m.max(a.norm()))
}

pub fn norm_p_real(w: &[f64], u: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return u.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    }
    u.iter()
        .zip(w)
        .map(|(a, m)| a.abs().powf(p) * m)
        .sum::<f64>()
        .powf(1.0 / p)
}

pub(crate) fn sub(u: &[C64], v: &[C64]) -> Vec<C64> {
    u.iter().zip(v).map(|(a, b)| a - b).collect()
}

pub(crate) fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn col_vec(m: &Mat<C64>, j: usize) -> Vec<C64> {
    m.col_as_slice(j).to_vec()
}

pub(crate) fn mat_from_col(col: &[C64]) -> Mat<C64> {
    Mat::from_fn(col.len(), 1, |i, _| col[i])
}

/// Least-squares line `y ≈ slope·x + intercept`; `None` when `x` has no spread.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 1e-300 * n || sxx <= 1e-24 * x.iter().map(|a| a * a).sum::<f64>() {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Compressed sparse row complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<C64>,
}

impl Csr {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, C64)>) -> Csr {
        t.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(t.len());
        let mut val: Vec<C64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(j);
                val.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n, row_ptr, col, val }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = ZERO;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yi = s;
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col[k], self.val[k]))
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::<C64>::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// μ-adjoint: `(A*)_{ij} = conj(A_{ji}) μ_j / μ_i`.
    pub fn weighted_adjoint(&self, w: &[f64]) -> Csr {
        let mut t = Vec::with_capacity(self.val.len());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.push((j, i, v.conj() * (w[i] / w[j])));
            }
        }
        Csr::from_triplets(self.n, t)
    }

    /// Max absolute row sum, an upper bound for the spectral radius.
    pub fn gershgorin(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Row-difference representation `(Af)_i = b_i f_i + Σ_{j≠i} c_ij (f_j − f_i)`.
///
/// When rows sum to zero up to round-off, `b_i` is snapped to exactly zero so
/// that constants are annihilated exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffForm {
    off: Csr,
    b: Vec<C64>,
}

impl DiffForm {
    pub fn new(a: &Csr) -> DiffForm {
        let mut t = Vec::new();
        let mut b = vec![ZERO; a.n];
        for (i, bi) in b.iter_mut().enumerate() {
            let mut s = ZERO;
            let mut scale = 0.0f64;
            for (j, v) in a.row(i) {
                s += v;
                scale = scale.max(v.norm());
                if j != i {
                    t.push((i, j, v));
                }
            }
            *bi = if s.norm() <= 1e-13 * scale { ZERO } else { s };
        }
        DiffForm {
            off: Csr::from_triplets(a.n, t),
            b,
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.off.n)
            .map(|i| {
                let xi = x[i];
                let mut s = self.b[i] * xi;
                for (j, v) in self.off.row(i) {
                    s += v * (x[j] - xi);
                }
                s
            })
            .collect()
    }
}

/// Reverse-free Cuthill–McKee ordering of a symmetric sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn cuthill_mckee(a: &Csr) -> Vec<usize> {
    let n = a.n;
    let deg: Vec<usize> = (0..n).map(|i| a.row_ptr[i + 1] - a.row_ptr[i]).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n).filter(|&i| !seen[i]).min_by_key(|&i| (deg[i], i)).unwrap();
        seen[start] = true;
        let mut head = order.len();
        order.push(start);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut nb: Vec<usize> = a.row(v).map(|(j, _)| j).filter(|&j| !seen[j]).collect();
            nb.sort_by_key(|&j| (deg[j], j));
            nb.dedup();
            for j in nb {
                if !seen[j] {
                    seen[j] = true;
                    order.push(j);
                }
            }
        }
    }
    order
}

/// Lower/upper bandwidth of `a` under the ordering `perm` (`perm[new] = old`).
pub fn bandwidth(a: &Csr, perm: &[usize]) -> (usize, usize) {
    let mut pos = vec![0usize; a.n];
    for (new, &old) in perm.iter().enumerate() {
        pos[old] = new;
    }
    let (mut kl, mut ku) = (0usize, 0usize);
    for i in 0..a.n {
        for (j, _) in a.row(i) {
            let (pi, pj) = (pos[i], pos[j]);
            if pi > pj {
                kl = kl.max(pi - pj);
            } else {
                ku = ku.max(pj - pi);
            }
        }
    }
    (kl, ku)
}

/// LU factorization with partial pivoting of a permuted banded matrix.
///
/// Row `i` of the band stores columns `i - kl ..= i + kl + ku`; multipliers
/// stay in the column where they were created and later row swaps only touch
/// the active columns.
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    ab: Vec<C64>,
    piv: Vec<usize>,
    perm: Vec<usize>,
}

impl BandLu {
    /// Factors `shift·I + scale·A` in the ordering `perm`.
    pub fn factor(a: &Csr, shift: C64, scale: C64, perm: &[usize], kl: usize, ku: usize) -> Result<BandLu> {
        let n = a.n;
        let w = 2 * kl + ku + 1;
        let mut pos = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            pos[old] = new;
        }
        let mut ab = vec![ZERO; n * w];
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        for (i, &old) in perm.iter().enumerate() {
            ab[idx(i, i)] += shift;
            for (j_old, v) in a.row(old) {
                ab[idx(i, pos[j_old])] += scale * v;
            }
        }
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = ab[idx(k, k)].norm();
            for i in k + 1..=last_row {
                let v = ab[idx(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::InvalidArgument("singular banded matrix".into()));
            }
            piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    ab.swap(idx(k, j), idx(p, j));
                }
            }
            let inv = ONE / ab[idx(k, k)];
            for i in k + 1..=last_row {
                let l = ab[idx(i, k)] * inv;
                ab[idx(i, k)] = l;
                if l != ZERO {
                    for j in k + 1..=last_col {
                        let u = ab[idx(k, j)];
                        ab[idx(i, j)] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            w,
            ab,
            piv,
            perm: perm.to_vec(),
        })
    }

    /// Solves in place on a vector given in the original ordering.
    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.w);
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        let mut b: Vec<C64> = self.perm.iter().map(|&o| rhs[o]).collect();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != ZERO {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.ab[idx(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.ab[idx(k, j)] * b[j];
            }
            b[k] = s / self.ab[idx(k, k)];
        }
        let mut out = vec![ZERO; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = b[new];
        }
        out
    }
}

/// Dense unweighted ℓ^p → ℓ^q norm by Boyd's power method, maximized over
/// the given starting vectors.
pub fn pq_norm(a: MatRef<'_, C64>, p: f64, q: f64, starts: &[Vec<C64>], iters: usize) -> f64 {
    let pd = p / (p - 1.0);
    let dual = |y: &[C64], r: f64| -> Vec<C64> {
        // dual vector in ℓ^{r'} of y ∈ ℓ^r with unit norm
        let nr: f64 = y.iter().map(|v| v.norm().powf(r)).sum::<f64>().powf(1.0 / r);
        if nr == 0.0 {
            return vec![ZERO; y.len()];
        }
        y.iter()
            .map(|v| {
                let a = v.norm();
                if a == 0.0 {
                    ZERO
                } else {
                    (v / a) * (a / nr).powf(r - 1.0)
                }
            })
            .collect()
    };
    let lp = |x: &[C64], r: f64| x.iter().map(|v| v.norm().powf(r)).sum::<f64>().powf(1.0 / r);
    let apply = |x: &[C64]| -> Vec<C64> {
        let xm = mat_from_col(x);
        let y = a * &xm;
        y.col_as_slice(0).to_vec()
    };
    let apply_h = |y: &[C64]| -> Vec<C64> {
        let ym = mat_from_col(y);
        let x = a.adjoint() * &ym;
        x.col_as_slice(0).to_vec()
    };
    let mut best = 0.0f64;
    for s in starts {
        let n0 = lp(s, p);
        if n0 == 0.0 {
            continue;
        }
        let mut x: Vec<C64> = s.iter().map(|v| v / n0).collect();
        let mut val = lp(&apply(&x), q);
        for _ in 0..iters {
            let y = apply(&x);
            let z = apply_h(&dual(&y, q));
            let xn = dual(&z, pd);
            if lp(&xn, p) == 0.0 {
                break;
            }
            let v = lp(&apply(&xn), q);
            x = xn;
            let done = (v - val).abs() <= 1e-13 * v.max(1e-300);
            val = val.max(v);
            if done {
                break;
            }
        }
        best = best.max(val);
    }
    best
}

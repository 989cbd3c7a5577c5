//! Probe functions for boundedness measurements.

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::norm_inf;
use crate::operator::random_vector;
use crate::space::{Ball, MetricMeasureSpace};

/// `count` complex Gaussian columns.
pub fn gaussian_probes(n: usize, count: usize, seed: u64) -> Mat<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<C64>> = (0..count).map(|_| random_vector(&mut rng, n)).collect();
    Mat::from_fn(n, count, |i, j| cols[j][i])
}

/// Gaussian columns scaled to unit sup norm.
pub fn bounded_probes(n: usize, count: usize, seed: u64) -> Mat<C64> {
    let mut m = gaussian_probes(n, count, seed);
    for j in 0..count {
        let s = norm_inf(m.col_as_slice(j)).max(1e-300);
        m.col_as_slice_mut(j).iter_mut().for_each(|v| *v /= s);
    }
    m
}

/// Ball indicators at dyadic radii, axis-0 cosine modes and checkerboard
/// signs.
pub fn structured_probes(space: &MetricMeasureSpace) -> Mat<C64> {
    let n = space.len();
    let mut cols: Vec<Vec<C64>> = Vec::new();
    let h = space.min_spacing();
    let diam = space.diam();
    let mut r = 1.5 * h;
    while r < diam / 2.0 {
        for c in [0, n / 2] {
            let mut v = vec![C64::new(0.0, 0.0); n];
            space.for_each_in_ball(&Ball { center: c, radius: r }, |y| v[y] = C64::new(1.0, 0.0));
            cols.push(v);
        }
        r *= 2.0;
    }
    if let Some(dims) = space.dims() {
        let len = dims[0];
        let mut k = 1;
        while k <= len / 2 {
            cols.push(
                (0..n)
                    .map(|x| {
                        let c = space.coords(x)[0] as f64;
                        C64::new((2.0 * std::f64::consts::PI * k as f64 * c / len as f64).cos(), 0.0)
                    })
                    .collect(),
            );
            k *= 2;
        }
        cols.push(
            (0..n)
                .map(|x| {
                    let s: usize = space.coords(x).iter().sum();
                    C64::new(if s.is_multiple_of(2) { 1.0 } else { -1.0 }, 0.0)
                })
                .collect(),
        );
    }
    Mat::from_fn(n, cols.len(), |i, j| cols[j][i])
}

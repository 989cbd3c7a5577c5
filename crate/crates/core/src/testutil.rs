//! Shared fixtures for unit tests.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::operator::{
    build_divergence_form, random_vector, stencil_edges, Boundary, CoefficientField, SectorialOperator,
};
use crate::space::{build_grid_space, Topology};

pub(crate) fn laplacian(dims: &[usize], boundary: Boundary) -> SectorialOperator {
    let topo = match boundary {
        Boundary::Periodic => Topology::Periodic,
        Boundary::Dirichlet => Topology::Bounded,
    };
    let s = build_grid_space(dims, 1.0, topo).unwrap();
    let e = stencil_edges(&s, boundary).unwrap().len();
    build_divergence_form(&s, &CoefficientField::constant(C64::new(1.0, 0.0), e), boundary).unwrap()
}

pub(crate) fn ring(n: usize) -> SectorialOperator {
    laplacian(&[n], Boundary::Periodic)
}

pub(crate) fn complex_ring(n: usize, seed: u64) -> SectorialOperator {
    let s = build_grid_space(&[n], 1.0, Topology::Periodic).unwrap();
    let e = stencil_edges(&s, Boundary::Periodic).unwrap().len();
    let c = CoefficientField::random(e, 0.5, 2.0, 0.6, seed).unwrap();
    build_divergence_form(&s, &c, Boundary::Periodic).unwrap()
}

pub(crate) fn rand_vec(n: usize, seed: u64) -> Vec<C64> {
    random_vector(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

pub(crate) fn rel(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}

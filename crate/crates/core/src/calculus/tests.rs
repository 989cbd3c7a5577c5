use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use super::*;
use crate::linalg::{inner, mat_from_col};
use crate::operator::{Boundary, SectorialOperator};
use crate::space::{build_explicit_space, build_grid_space, Topology};
use crate::testutil::{complex_ring, laplacian, rand_vec, rel, ring};

fn mode(n: usize, k: usize) -> (Vec<C64>, f64) {
    let f = (0..n)
        .map(|x| C64::new((2.0 * PI * (k * x) as f64 / n as f64).cos(), 0.0))
        .collect();
    let s = (PI * k as f64 / n as f64).sin();
    (f, 4.0 * s * s)
}

fn diag_op(d: &[C64]) -> SectorialOperator {
    let n = d.len();
    let dist = (0..n)
        .map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect())
        .collect();
    let s = build_explicit_space(dist, vec![1.0; n], 1).unwrap();
    SectorialOperator::diagonal(&s, d).unwrap()
}

#[test]
fn pairing_constants() {
    let e1 = exp_monomial(1.0).unwrap();
    let e2 = exp_monomial(2.0).unwrap();
    let r = rational(1.0, 1.0).unwrap();
    // ∫ t e^{-2t} dt = 1/4, ∫ t/(1+t)^4 dt = 1/6, ∫ t^3 e^{-2t} dt = 3/8
    assert!((pairing_integral(&e1, &e1).unwrap() - 0.25).abs() < 1e-13);
    assert!((pairing_integral(&r, &r).unwrap() - 1.0 / 6.0).abs() < 1e-13);
    assert!((pairing_integral(&e2, &e2).unwrap() - 0.375).abs() < 1e-13);
    let (n1, c1) = normalize_pair(&e1, &e1).unwrap();
    assert!((c1 - 4.0).abs() < 1e-12);
    assert!((pairing_integral(&e1, &n1).unwrap() - 1.0).abs() < 1e-12);
    let (_, c2) = normalize_pair(&r, &r).unwrap();
    assert!((c2 - 6.0).abs() < 1e-11);
    let (_, c3) = normalize_pair(
        &rational(1.0, 1.0).unwrap(),
        &rational(1.0, 1.0).unwrap().scale(0.5).unwrap(),
    )
    .unwrap();
    assert!((c3 - 12.0).abs() < 1e-10);
}

#[test]
fn contour_matches_scalar_values_on_diagonal() {
    let d: Vec<C64> = [0.0, 1e-3, 0.3, 1.0, 7.0, 200.0]
        .iter()
        .enumerate()
        .map(|(i, &r)| C64::from_polar(r, if i % 2 == 0 { 0.3 } else { -0.3 }))
        .collect();
    let op = diag_op(&d);
    let calc = ContourCalculus::new(&op);
    let f = vec![C64::new(1.0, 0.0); d.len()];
    for phi in [
        exp_monomial(1.0).unwrap(),
        rational(0.5, 1.5).unwrap(),
        semigroup_symbol(),
        one_minus_exp(2).unwrap(),
    ] {
        for s in [0.01, 1.0, 30.0] {
            let g = calc.apply(&phi, s, &mat_from_col(&f), false).unwrap();
            for (i, l) in d.iter().enumerate() {
                let want = phi.eval(l * s);
                assert!(
                    (g[(i, 0)] - want).norm() < 1e-11,
                    "{phi} s={s} λ={l}: {} vs {want}",
                    g[(i, 0)]
                );
            }
        }
    }
}

#[test]
fn fourier_mode_oracle() {
    let n = 64;
    let op = ring(n);
    let (f, lam) = mode(n, 3);
    let psi = exp_monomial(1.0).unwrap();
    for calc in [
        make_calculus(&op, Engine::Contour).unwrap(),
        make_calculus(&op, Engine::Spectral).unwrap(),
    ] {
        for t in [0.5, 3.0, 10.0] {
            let g = apply_psi(calc.as_ref(), &psi, t, &f).unwrap();
            let s = t * t * lam;
            let want: Vec<C64> = f.iter().map(|v| v * (s * (-s).exp())).collect();
            assert!(rel(&g, &want) < 1e-10, "{:?} t={t}", calc.engine());
            let h = apply_semigroup(calc.as_ref(), t, &f).unwrap();
            let want: Vec<C64> = f.iter().map(|v| v * (-t * lam).exp()).collect();
            assert!(rel(&h, &want) < 1e-10);
            let p = apply_fractional_power(calc.as_ref(), 1.0, &f).unwrap();
            let want: Vec<C64> = f.iter().map(|v| v * lam.sqrt()).collect();
            assert!(rel(&p, &want) < 1e-10);
        }
    }
}

#[test]
fn engines_agree_on_complex_coefficients() {
    let op = complex_ring(48, 7);
    let c = ContourCalculus::new(&op);
    let s = SpectralCalculus::new(&op).unwrap();
    let f = mat_from_cols_local(&[rand_vec(48, 1), rand_vec(48, 2)]);
    for phi in [
        exp_monomial(1.0).unwrap(),
        rational(1.0, 1.0).unwrap(),
        semigroup_symbol(),
    ] {
        for adjoint in [false, true] {
            let pc = c.prepare(&phi, &f, adjoint).unwrap();
            let ps = s.prepare(&phi, &f, adjoint).unwrap();
            for sc in [0.05, 1.0, 20.0] {
                let a = pc.at(sc).unwrap();
                let b = ps.at(sc).unwrap();
                for j in 0..2 {
                    let e = rel(a.col_as_slice(j), b.col_as_slice(j));
                    assert!(e < 1e-9, "{phi} adj={adjoint} s={sc}: {e:e}");
                }
            }
        }
    }
    let a = c.fractional_power(0.7, &f, false).unwrap();
    let b = s.fractional_power(0.7, &f, false).unwrap();
    assert!(rel(a.col_as_slice(0), b.col_as_slice(0)) < 1e-9);
}

fn mat_from_cols_local(cols: &[Vec<C64>]) -> Mat<C64> {
    Mat::from_fn(cols[0].len(), cols.len(), |i, j| cols[j][i])
}

#[test]
fn adjoint_pairing() {
    let op = complex_ring(40, 3);
    let calc = ContourCalculus::new(&op);
    let w = op.weights();
    let (f, g) = (rand_vec(40, 5), rand_vec(40, 6));
    let psi = rational(1.0, 2.0).unwrap();
    let a = apply_psi(&calc, &psi, 2.0, &f).unwrap();
    let b = apply_psi_adjoint(&calc, &psi, 2.0, &g).unwrap();
    let (l, r) = (inner(w, &a, &g), inner(w, &f, &b));
    assert!((l - r).norm() < 1e-10 * l.norm().max(1.0));
}

#[test]
fn conservation_on_periodic_ring() {
    let op = complex_ring(32, 11);
    let grid = TGrid::new(0.1, 30.0, 2).unwrap();
    let psi = exp_monomial(1.0).unwrap();
    let rep = conservation_check(&ContourCalculus::new(&op), &psi, &grid).unwrap();
    assert!(rep.semigroup < 1e-12 && rep.psi < 1e-12, "{rep:?}");
    let dir = laplacian(&[16], Boundary::Dirichlet);
    assert!(conservation_check(&ContourCalculus::new(&dir), &psi, &grid).is_err());
}

#[test]
fn quadratic_constant_is_one_quarter() {
    let op = ring(64);
    let calc = SpectralCalculus::new(&op).unwrap();
    let f = rand_vec(64, 9);
    let pf = op.project_range(&f);
    let (lo, hi) = op.spectral_bounds().unwrap();
    let grid = TGrid::new(1e-9 / hi, 1e3 / lo, 32).unwrap();
    let q = quadratic_norm(&calc, &exp_monomial(1.0).unwrap(), &f, &grid).unwrap();
    let want = 0.25 * norm2(op.weights(), &pf).powi(2);
    assert!((q * q - want).abs() < 1e-8 * want, "{} vs {want}", q * q);
}

#[test]
fn calderon_converges() {
    let op = laplacian(&[8, 8], Boundary::Periodic);
    let calc = SpectralCalculus::new(&op).unwrap();
    let psi = exp_monomial(1.0).unwrap();
    let (pt, _) = normalize_pair(&psi, &psi).unwrap();
    let f = rand_vec(64, 4);
    let narrow = TGrid::covering(&op, 1e-1, 1e1, 16).unwrap();
    let wide = TGrid::covering(&op, 1e-4, 1e3, 16).unwrap();
    let a = calderon_reconstruct(&calc, &psi, &pt, &f, &narrow).unwrap();
    let b = calderon_reconstruct(&calc, &psi, &pt, &f, &wide).unwrap();
    assert!(
        b.residual < a.residual && b.residual < 1e-6,
        "{} {}",
        a.residual,
        b.residual
    );
    let c = calderon_reconstruct(&ContourCalculus::new(&op), &psi, &pt, &f, &wide).unwrap();
    assert!(rel(&c.result, &b.result) < 1e-9);
}

#[test]
fn scaling_covariance_and_commutation() {
    let op = complex_ring(24, 2);
    let op3 = op.scaled(3.0).unwrap();
    let psi = exp_monomial(2.0).unwrap();
    let f = rand_vec(24, 8);
    let a = ContourCalculus::new(&op3)
        .apply(&psi, 0.5, &mat_from_col(&f), false)
        .unwrap();
    let b = ContourCalculus::new(&op)
        .apply(&psi, 1.5, &mat_from_col(&f), false)
        .unwrap();
    assert!(rel(a.col_as_slice(0), b.col_as_slice(0)) < 1e-10);
    let calc = ContourCalculus::new(&op);
    let lf = op.apply(&f);
    let x = calc.apply(&psi, 0.8, &mat_from_col(&lf), false).unwrap();
    let y = op.apply(calc.apply(&psi, 0.8, &mat_from_col(&f), false).unwrap().col_as_slice(0));
    assert!(rel(x.col_as_slice(0), &y) < 1e-10);
}

#[test]
fn dirichlet_square_root_squares_back() {
    let op = laplacian(&[20], Boundary::Dirichlet);
    let calc = ContourCalculus::new(&op);
    let f = rand_vec(20, 12);
    let h = apply_fractional_power(&calc, 1.0, &f).unwrap();
    let hh = apply_fractional_power(&calc, 1.0, &h).unwrap();
    assert!(rel(&hh, &op.apply(&f)) < 1e-10);
    // first Dirichlet eigenvalue 4 sin²(π / 42)
    let v: Vec<C64> = (1..=20).map(|j| C64::new((PI * j as f64 / 21.0).sin(), 0.0)).collect();
    let lam = 4.0 * (PI / 42.0).sin().powi(2);
    let g = apply_semigroup(&calc, 5.0, &v).unwrap();
    let want: Vec<C64> = v.iter().map(|x| x * (-5.0 * lam).exp()).collect();
    assert!(rel(&g, &want) < 1e-10);
}

#[test]
fn sector_hypothesis_is_enforced() {
    let d = vec![C64::from_polar(1.0, 1.2), C64::new(2.0, 0.0)];
    let op = diag_op(&d);
    let calc = ContourCalculus::new(&op);
    let one = mat_from_col(&[C64::new(1.0, 0.0); 2]);
    let unbounded = exp_monomial(1.0).unwrap().zpow(-2.0).unwrap();
    assert!(matches!(
        calc.apply(&unbounded, 1.0, &one, false),
        Err(Error::Hypothesis(_))
    ));
    assert!(calc.apply(&exp_monomial(1.0).unwrap(), 1.0, &one, false).is_ok());
    assert!(calc
        .apply(
            &rational(1.0, 1.0).unwrap(),
            1.0,
            &mat_from_col(&[C64::new(1.0, 0.0); 2]),
            false
        )
        .is_ok());
}

#[test]
fn offdiag_fit_on_ring() {
    let op = ring(64);
    let calc = SpectralCalculus::new(&op).unwrap();
    let psi = exp_monomial(1.0).unwrap();
    let e: Vec<usize> = (0..4).collect();
    let f: Vec<usize> = (20..24).collect();
    let ts = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
    let r = measure_offdiag_psi(&calc, &psi, &e, &f, &ts).unwrap();
    assert_eq!(r.dist, 17.0);
    assert!(r.gamma.unwrap() > 1.0, "{r:?}");
    let same = measure_offdiag_psi(&calc, &psi, &e, &e, &ts).unwrap();
    assert!(same.gamma.is_none() && same.dist == 0.0);
}

#[test]
fn offdiag_lp_dual_agrees() {
    let op = ring(32);
    let calc = SpectralCalculus::new(&op).unwrap();
    let r = measure_offdiag_lp(&calc, 1.5, &[2.0, 4.0], &[0, 7]).unwrap();
    assert!(r.dual_gap < 1e-6, "{}", r.dual_gap);
    assert!(
        r.eps_star > 0.0 && r.sup_eps0.is_finite(),
        "{} {}",
        r.eps_star,
        r.sup_eps0
    );
}

#[test]
fn grid_space_spacing_enters_as_inverse_square() {
    let s = build_grid_space(&[32], 0.5, Topology::Periodic).unwrap();
    let e = crate::operator::stencil_edges(&s, Boundary::Periodic).unwrap().len();
    let op = crate::operator::build_divergence_form(
        &s,
        &crate::operator::CoefficientField::constant(C64::new(1.0, 0.0), e),
        Boundary::Periodic,
    )
    .unwrap();
    let (f, lam) = mode(32, 2);
    let g = apply_semigroup(&ContourCalculus::new(&op), 1.0, &f).unwrap();
    let want: Vec<C64> = f.iter().map(|v| v * (-4.0 * lam).exp()).collect();
    assert!(rel(&g, &want) < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn semigroup_is_a_contraction_family(t in 0.01f64..50.0, seed in 0u64..1000) {
        let op = ring(16);
        let calc = SpectralCalculus::new(&op).unwrap();
        let f = rand_vec(16, seed);
        let g = apply_semigroup(&calc, t, &f).unwrap();
        let w = op.weights();
        prop_assert!(norm2(w, &g) <= norm2(w, &f) * (1.0 + 1e-12));
        let gg = apply_semigroup(&calc, t, &g).unwrap();
        let g2 = apply_semigroup(&calc, 2.0 * t, &f).unwrap();
        prop_assert!(rel(&gg, &g2) < 1e-10);
    }
}

#[test]
fn mixed_exponential_pair_constant() {
    // ∫ t² e^{-2t} dt = Γ(3)/2³ = 1/4
    let (_, c) = normalize_pair(&exp_monomial(2.0).unwrap(), &exp_monomial(1.0).unwrap()).unwrap();
    assert!((c - 4.0).abs() < 1e-11, "{c}");
    let e = exp_monomial(1.0).unwrap();
    let (n, _) = normalize_pair(&e, &e).unwrap();
    let (_, c1) = normalize_pair(&e, &n).unwrap();
    assert!((c1 - 1.0).abs() < 1e-12);
}

#[test]
fn full_power_is_direct_action() {
    let op = complex_ring(32, 5);
    let f = op.project_range(&rand_vec(32, 3));
    for calc in [
        make_calculus(&op, Engine::Contour).unwrap(),
        make_calculus(&op, Engine::Spectral).unwrap(),
    ] {
        let a = apply_fractional_power(calc.as_ref(), 2.0, &f).unwrap();
        assert!(rel(&a, &op.apply(&f)) < 1e-9);
        let h = apply_fractional_power(calc.as_ref(), 0.6, &f).unwrap();
        let hh = apply_fractional_power(calc.as_ref(), 1.4, &h).unwrap();
        assert!(rel(&hh, &op.apply(&f)) < 1e-8);
    }
}

#[test]
fn symbols_commute() {
    let op = complex_ring(32, 9);
    let calc = ContourCalculus::new(&op);
    let f = mat_from_col(&rand_vec(32, 4));
    let (p1, p2) = (exp_monomial(1.0).unwrap(), rational(1.0, 2.0).unwrap());
    let a = calc
        .apply(&p1, 0.7, &calc.apply(&p2, 3.0, &f, false).unwrap(), false)
        .unwrap();
    let b = calc
        .apply(&p2, 3.0, &calc.apply(&p1, 0.7, &f, false).unwrap(), false)
        .unwrap();
    assert!(rel(a.col_as_slice(0), b.col_as_slice(0)) < 1e-10);
}

#[test]
fn rational_offdiag_order() {
    let op = laplacian(&[512], Boundary::Periodic);
    let calc = ContourCalculus::new(&op);
    let psi = rational(2.0, 2.0).unwrap();
    let (e, f) = separated_sets(op.space(), 256, 8.0, 32.0);
    let ts = offdiag_window(1.0, 32.0, 4).unwrap();
    let r = measure_offdiag_psi(&calc, &psi, &e, &f, &ts).unwrap();
    assert_eq!(r.dist, 32.0);
    assert!(r.gamma.unwrap() >= 1.7, "{r:?}");
}

#[test]
fn integer_rational_symbols_are_exact() {
    let op = complex_ring(64, 3);
    let spec = SpectralCalculus::new(&op).unwrap();
    let cont = ContourCalculus::new(&op);
    let f = mat_from_col(&rand_vec(64, 5));
    for psi in [
        rational(2.0, 2.0).unwrap(),
        rational(1.0, 3.0).unwrap().scale(0.5).unwrap(),
    ] {
        for adj in [false, true] {
            let a = spec.apply(&psi, 0.7, &f, adj).unwrap();
            let b = cont.apply(&psi, 0.7, &f, adj).unwrap();
            assert!(rel(b.col_as_slice(0), a.col_as_slice(0)) < 1e-10);
        }
    }
}

use num_complex::Complex64 as C64;

use super::*;
use crate::calculus::{
    exp_monomial, exp_monomial_power, offdiag_window, one_minus_exp, separated_sets, SpectralCalculus,
};
use crate::error::Error;
use crate::hardy::molecule_make;
use crate::linalg::{inner, norm2, norm_inf, sub};
use crate::space::Ball;
use crate::testutil::{complex_ring, rand_vec, rel, ring};

fn setup(n: usize) -> (crate::operator::SectorialOperator, SpectralCalculus, ParaproductSpec) {
    let op = ring(n);
    let calc = SpectralCalculus::new(&op).unwrap();
    let psi = exp_monomial(1.0).unwrap();
    let g = TGrid::covering(&op, 1e-6, 1e4, 8).unwrap();
    let spec = ParaproductSpec::normalized(&op, psi.clone(), psi, g).unwrap();
    (op, calc, spec)
}

fn bounded(n: usize, seed: u64) -> Vec<C64> {
    let v = rand_vec(n, seed);
    let s = norm_inf(&v);
    v.into_iter().map(|x| x / s).collect()
}

#[test]
fn constants_are_invisible() {
    let (op, calc, spec) = setup(64);
    let c = vec![C64::new(0.7, 0.2); 64];
    let f = rand_vec(64, 1);
    assert!(norm2(op.weights(), &paraproduct_apply(&calc, &spec, &c, &f).unwrap()) < 1e-12);
    assert!(norm2(op.weights(), &paraproduct_adjoint_apply(&calc, &spec, &c, &f).unwrap()) < 1e-12);
    let r = measure_para_l2(&calc, &spec, &c, 5, 0).unwrap();
    assert!(r.scale.fallback);
    assert!(r.ratios.iter().all(|&x| x < 1e-12));
}

#[test]
fn bilinear_and_range_valued() {
    let (op, calc, spec) = setup(64);
    let (b1, b2, f) = (rand_vec(64, 1), rand_vec(64, 2), rand_vec(64, 3));
    let sum: Vec<C64> = b1.iter().zip(&b2).map(|(a, b)| a + b * 2.0).collect();
    let lhs = paraproduct_apply(&calc, &spec, &sum, &f).unwrap();
    let p1 = paraproduct_apply(&calc, &spec, &b1, &f).unwrap();
    let p2 = paraproduct_apply(&calc, &spec, &b2, &f).unwrap();
    let rhs: Vec<C64> = p1.iter().zip(&p2).map(|(a, b)| a + b * 2.0).collect();
    assert!(rel(&lhs, &rhs) < 1e-12);
    let k = op.project_kernel(&p1);
    assert!(norm2(op.weights(), &k) <= 1e-10 * norm2(op.weights(), &p1));
}

#[test]
fn identity_on_constants() {
    let (op, calc, spec) = setup(128);
    let b = rand_vec(128, 5);
    let r = para_identity(&calc, &spec, &b).unwrap();
    let pb = norm2(op.weights(), &op.project_range(&b));
    assert!(r.residual <= 1e-2 * pb, "{r:?}");
    assert!(r.residual <= r.budget, "{r:?}");
    assert!(r.adjoint <= 1e-2 * r.b_sup, "{r:?}");
}

#[test]
fn adjoint_and_dual_pairings() {
    let op = complex_ring(48, 9);
    let calc = SpectralCalculus::new(&op).unwrap();
    let psi = exp_monomial(1.0).unwrap();
    let spec = ParaproductSpec::normalized(
        &op,
        psi.clone(),
        exp_monomial(2.0).unwrap(),
        TGrid::covering(&op, 1e-4, 1e3, 4).unwrap(),
    )
    .unwrap();
    let w = op.weights();
    for seed in 0..5 {
        let (b, f, g) = (rand_vec(48, seed), rand_vec(48, 10 + seed), rand_vec(48, 20 + seed));
        let lhs = inner(w, &paraproduct_apply(&calc, &spec, &b, &f).unwrap(), &g);
        let rhs = inner(w, &f, &paraproduct_adjoint_apply(&calc, &spec, &b, &g).unwrap());
        let scale = norm2(w, &b) * norm2(w, &f) * norm2(w, &g);
        assert!((lhs - rhs).norm() <= 1e-8 * scale);
        let lhs = inner(w, &paraproduct(&calc, &spec, &f, &g).unwrap(), &b);
        let rhs = inner(w, &g, &paraproduct_dual(&calc, &spec, &f, &b).unwrap());
        assert!((lhs - rhs).norm() <= 1e-8 * scale);
    }
}

#[test]
fn l2_measurement_is_finite() {
    let (_, calc, spec) = setup(64);
    let b = bounded(64, 3);
    let r = measure_para_l2(&calc, &spec, &b, 10, 1).unwrap();
    assert!(!r.scale.fallback);
    assert!(r.sup.is_finite() && r.sup > 0.0);
    assert!(r.scale.bmo <= 2.0 * r.scale.sup);
    assert!((r.sup_inf - r.sup * r.scale.bmo / r.scale.sup).abs() < 1e-12 * r.sup);
}

#[test]
fn lp_and_bmo_measurements() {
    let (_, calc, spec) = setup(48);
    let b = bounded(48, 4);
    let r4 = measure_para_lp_hp(&calc, &spec, &b, 4.0, 3, 2).unwrap();
    assert!(r4.sup.is_finite() && r4.sup > 0.0);
    let ri = measure_para_lp_hp(&calc, &spec, &b, f64::INFINITY, 3, 2).unwrap();
    assert!(ri.sup.is_finite() && ri.sup > 0.0);
    // f ≡ 1 comes last: bmo(Pb) / bmo(b) is one
    assert!((ri.ratios.last().unwrap() - 1.0).abs() < 0.05, "{:?}", ri.ratios.last());
    assert!(measure_para_lp_hp(&calc, &spec, &b, 2.0, 3, 2).is_err());
}

#[test]
fn molecules_map_to_l1() {
    let (op, calc, spec) = setup(128);
    let mols: Vec<_> = [(10, 2.0), (64, 4.0), (100, 8.0)]
        .iter()
        .map(|&(c, r)| molecule_make(&calc, &Ball::new(c, r).unwrap(), 1, 0.5).unwrap())
        .collect();
    let one = vec![C64::new(1.0, 0.0); 128];
    let r = measure_para_hp_l1(&calc, &spec, &one, &mols).unwrap();
    for (m, v) in mols.iter().zip(&r.ratios) {
        let pm = crate::linalg::norm_p(op.weights(), &op.project_range(&m.m), 1.0);
        assert!((v - pm).abs() < 1e-2 * pm, "{v} {pm}");
    }
    let zero = vec![C64::new(0.0, 0.0); 128];
    assert_eq!(measure_para_hp_l1(&calc, &spec, &zero, &mols).unwrap().sup, 0.0);
    assert!(matches!(
        measure_para_hp_l1(&calc, &spec, &one, &[]),
        Err(Error::EmptyMolecules)
    ));
}

#[test]
fn offdiag_order_of_paraproduct() {
    let op = ring(256);
    let calc = SpectralCalculus::new(&op).unwrap();
    let psi = exp_monomial(2.0).unwrap();
    let spec = ParaproductSpec::normalized(&op, psi.clone(), psi, TGrid::covering(&op, 1e-4, 1e3, 8).unwrap()).unwrap();
    let f = bounded(256, 7);
    let (e, fs) = separated_sets(op.space(), 128, 8.0, 32.0);
    let ts = offdiag_window(1.0, 32.0, 4).unwrap();
    for phi in [one_minus_exp(2).unwrap(), exp_monomial_power(2).unwrap()] {
        let r = para_offdiag(&calc, &spec, &f, &e, &fs, &phi, &ts).unwrap();
        assert_eq!(r.admissible, 2.0);
        let g = r.fit.gamma.unwrap();
        assert!((g - r.admissible).abs() <= 0.5, "{g}");
    }
    let same = para_offdiag(&calc, &spec, &f, &e, &e, &one_minus_exp(2).unwrap(), &ts).unwrap();
    assert!(same.fit.gamma.is_none() && same.fit.constant.is_finite());
}

#[test]
fn leibniz_identity() {
    let (_, calc, spec) = setup(64);
    let f = bounded(64, 1);
    let g = rand_vec(64, 2);
    for s in [0.5, 1.0, 1.5] {
        let r = leibniz_check(&calc, &spec, s, &f, &g).unwrap();
        assert!(r.residual <= 1e-6, "{r:?}");
        assert!(r.norm_ratio.is_finite() && r.norm_ratio > 0.0);
    }
    assert_eq!(leibniz_check(&calc, &spec, 0.0, &f, &g).unwrap().residual, 0.0);
    assert!(matches!(
        leibniz_check(&calc, &spec, 1.9 * 1.2, &f, &g),
        Err(Error::InvalidArgument(_))
    ));
    let op = ring(64);
    let weak = ParaproductSpec::new(
        &op,
        crate::calculus::rational(0.4, 2.0).unwrap(),
        spec.psi_tilde.clone(),
        spec.tgrid,
    );
    assert!(matches!(
        leibniz_check(&calc, &weak, 1.0, &f, &g),
        Err(Error::Hypothesis(_))
    ));
}

#[test]
fn linf_l2_and_averages() {
    let (op, calc, spec) = setup(64);
    let r = measure_para_linf_l2(&calc, &spec, 10, 3).unwrap();
    assert!(r.sup.is_finite() && r.sup > 0.0);
    let c = vec![C64::new(2.0, 0.0); 64];
    let g = rand_vec(64, 8);
    let p = paraproduct(&calc, &spec, &c, &g).unwrap();
    let ratio = norm2(op.weights(), &p) / (2.0 * norm2(op.weights(), &g));
    assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    let k = vec![C64::new(1.0, 0.0); 64];
    assert!(norm2(op.weights(), &paraproduct(&calc, &spec, &g, &k).unwrap()) < 1e-12);
    let a = average_semigroup_linf(&calc, &spec, &bounded(64, 9)).unwrap();
    assert!(a <= 1.0 + 1e-12);
}

#[test]
fn truncation_tail_shrinks() {
    let (op, calc, spec) = setup(64);
    let (b, f) = (rand_vec(64, 1), rand_vec(64, 2));
    let base = TGrid::covering(&op, 1e-1, 1e1, 8).unwrap();
    let exact = paraproduct_apply(&calc, &spec.with_tgrid(base.widen(64.0)), &b, &f).unwrap();
    let mut last = f64::INFINITY;
    for k in [1.0, 4.0, 16.0] {
        let p = paraproduct_apply(&calc, &spec.with_tgrid(base.widen(k)), &b, &f).unwrap();
        let d = norm2(op.weights(), &sub(&p, &exact));
        assert!(d < last, "{d} {last}");
        last = d;
    }
}

#[test]
fn warnings_flag_weak_symbols() {
    let op = ring(16);
    let g = TGrid::new(1.0, 4.0, 2).unwrap();
    let ok = ParaproductSpec::new(&op, exp_monomial(1.0).unwrap(), exp_monomial(1.0).unwrap(), g);
    assert!(ok.warnings.is_empty());
    let weak = ParaproductSpec::new(
        &op,
        crate::calculus::rational(0.2, 0.2).unwrap(),
        crate::calculus::rational(0.2, 0.2).unwrap(),
        g,
    );
    assert_eq!(weak.warnings.len(), 3);
}

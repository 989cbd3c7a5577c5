use num_complex::Complex64 as C64;

use super::*;
use crate::calculus::{exp_monomial, normalize_pair, rational, SpectralCalculus};
use crate::linalg::norm_inf;
use crate::operator::Boundary;
use crate::testutil::{laplacian, rand_vec, ring};

fn psi0() -> PsiFunction {
    exp_monomial(1.0).unwrap()
}

#[test]
fn l2_value_matches_quadratic_constant() {
    let op = ring(64);
    let calc = SpectralCalculus::new(&op).unwrap();
    let g = TGrid::covering(&op, 1e-8, 1e4, 16).unwrap();
    for seed in 0..5 {
        let f = rand_vec(64, seed);
        let pf = op.project_range(&f);
        let r = hardy_norm(&calc, &f, 2.0, &psi0(), &g).unwrap();
        let c = (r.value / norm2(op.weights(), &pf)).powi(2);
        assert!((c - 0.125).abs() < 1e-6, "{c}");
    }
    let one = vec![C64::new(1.0, 0.0); 64];
    assert!(hardy_norm(&calc, &one, 1.0, &psi0(), &g).unwrap().value < 1e-12);
}

#[test]
fn hypotheses_name_the_failing_order() {
    let op = ring(16);
    let calc = SpectralCalculus::new(&op).unwrap();
    let g = TGrid::new(1.0, 4.0, 2).unwrap();
    let f = rand_vec(16, 1);
    let slow = rational(1.0, 0.2).unwrap();
    let e = hardy_norm(&calc, &f, 1.0, &slow, &g).unwrap_err();
    assert!(matches!(&e, Error::Hypothesis(m) if m.contains("beta")), "{e}");
    assert!(hardy_norm(&calc, &f, 4.0, &slow, &g).is_ok());
    let flat = rational(0.2, 1.0).unwrap();
    let e = hardy_norm(&calc, &f, 4.0, &flat, &g).unwrap_err();
    assert!(matches!(&e, Error::Hypothesis(m) if m.contains("alpha")), "{e}");
    assert!(carleson_characterization(&calc, &slow, &f, &g, 1).is_err());
}

#[test]
fn refinement_delta_is_small() {
    let op = ring(32);
    let calc = SpectralCalculus::new(&op).unwrap();
    let g = TGrid::covering(&op, 1e-4, 1e3, 8).unwrap();
    let r = hardy_norm_refined(&calc, &rand_vec(32, 4), 1.0, &psi0(), &g).unwrap();
    assert!(r.refinement_delta.unwrap() < 0.05);
}

#[test]
fn bmo_ignores_constants() {
    let op = ring(48);
    let calc = SpectralCalculus::new(&op).unwrap();
    let balls = BallFamily::all(op.space(), vec![1.0, 2.0, 5.0, 11.0, 24.0]);
    let c = vec![C64::new(2.0, -1.0); 48];
    assert!(bmo_norm(&calc, &c, 1, &balls).unwrap() < 1e-12);
    let f = rand_vec(48, 7);
    let shifted: Vec<C64> = f.iter().zip(&c).map(|(a, b)| a + b).collect();
    let (a, b) = (
        bmo_norm(&calc, &f, 2, &balls).unwrap(),
        bmo_norm(&calc, &shifted, 2, &balls).unwrap(),
    );
    assert!((a - b).abs() < 1e-12 * a);
}

#[test]
fn bmo_of_an_eigenvector() {
    let n = 40;
    let op = ring(n);
    let calc = SpectralCalculus::new(&op).unwrap();
    let k = 3.0;
    let lam = 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k / n as f64).cos();
    let v: Vec<C64> = (0..n)
        .map(|x| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k * x as f64 / n as f64))
        .collect();
    let radii = vec![1.0, 2.5, 4.0, 7.0];
    let got = bmo_norm(&calc, &v, 2, &BallFamily::all(op.space(), radii.clone())).unwrap();
    // |v| ≡ 1, so every ball average of |v|² is one
    let want = radii
        .iter()
        .map(|r| (1.0 - (-r * r * lam).exp()).powi(2))
        .fold(0.0, f64::max);
    assert!((got - want).abs() < 1e-10, "{got} {want}");
}

#[test]
fn bmo_is_dominated_by_sup_norm() {
    let op = ring(64);
    let calc = SpectralCalculus::new(&op).unwrap();
    let balls = BallFamily::for_tgrid(op.space(), &TGrid::new(1.0, 32.0, 2).unwrap());
    let r: Vec<f64> = (0..10)
        .map(|s| {
            let f = rand_vec(64, 20 + s);
            bmo_norm(&calc, &f, 1, &balls).unwrap() / norm_inf(&f)
        })
        .collect();
    let hi = r.iter().copied().fold(0.0, f64::max);
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(hi <= 2.0 && lo > 0.0 && hi / lo < 3.0);
    assert!(bmo_warning(&op, 1).is_none());
    assert!(bmo_warning(&laplacian(&[4, 4], Boundary::Periodic), 0).is_some());
}

#[test]
fn constructed_molecules_pass() {
    let op = ring(128);
    let calc = SpectralCalculus::new(&op).unwrap();
    let ball = Ball::new(20, 4.0).unwrap();
    let mol = molecule_make(&calc, &ball, 1, 0.5).unwrap();
    assert!(mol.valid);
    assert!((mol.max_ratio() - 1.0).abs() < 1e-12);
    let w = op.weights();
    let inside: f64 = op
        .space()
        .ball_points(&ball)
        .iter()
        .map(|&y| mol.b[y].norm_sqr() * w[y])
        .sum::<f64>()
        .sqrt();
    let bound = time_scale(&op, 4.0) / op.space().ball_volume(&ball).sqrt();
    assert!(inside <= bound * (1.0 + 1e-12));
    let stricter = molecule_check(&op, &mol.m, &mol.b, &ball, 1, 1.0).unwrap();
    assert!(!stricter.valid && stricter.max_ratio() > 1.0);
    let m2: Vec<C64> = mol.m.iter().map(|x| x * 2.0).collect();
    let b2: Vec<C64> = mol.b.iter().map(|x| x * 2.0).collect();
    let doubled = molecule_check(&op, &m2, &b2, &ball, 1, 0.5).unwrap();
    assert!(!doubled.valid && (doubled.max_ratio() - 2.0).abs() < 1e-9);
}

#[test]
fn witness_and_zero_errors() {
    let op = ring(32);
    let ball = Ball::new(3, 2.0).unwrap();
    let b = rand_vec(32, 2);
    let wrong = rand_vec(32, 3);
    assert!(matches!(
        molecule_check(&op, &wrong, &b, &ball, 1, 0.5),
        Err(Error::WitnessMismatch(_))
    ));
    let zero = vec![C64::new(0.0, 0.0); 32];
    assert!(matches!(
        molecule_check(&op, &zero, &zero, &ball, 1, 0.5),
        Err(Error::ZeroCandidate)
    ));
}

#[test]
fn distant_molecules_barely_overlap() {
    let op = ring(128);
    let calc = SpectralCalculus::new(&op).unwrap();
    let a = molecule_make(&calc, &Ball::new(10, 3.0).unwrap(), 1, 0.5).unwrap();
    let b = molecule_make(&calc, &Ball::new(74, 3.0).unwrap(), 1, 0.5).unwrap();
    let w = op.weights();
    let cos = inner(w, &a.m, &b.m).norm() / (norm2(w, &a.m) * norm2(w, &b.m));
    assert!(cos < 0.1, "{cos}");
}

#[test]
fn molecule_norms_are_comparable_across_symbols() {
    let op = ring(128);
    let calc = SpectralCalculus::new(&op).unwrap();
    let g = TGrid::covering(&op, 1e-4, 1e3, 8).unwrap();
    let other = exp_monomial(2.0).unwrap();
    let mut r = Vec::new();
    for (c, rad) in [(5, 2.0), (40, 3.0), (90, 6.0), (17, 8.0)] {
        let mol = molecule_make(&calc, &Ball::new(c, rad).unwrap(), 1, 0.5).unwrap();
        let a = hardy_norm(&calc, &mol.m, 1.0, &psi0(), &g).unwrap().value;
        let b = hardy_norm(&calc, &mol.m, 1.0, &other, &g).unwrap().value;
        r.push(a / b);
    }
    let hi = r.iter().copied().fold(0.0, f64::max);
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(hi / lo < 2.0, "{r:?}");
}

#[test]
fn carleson_sides_for_constants_and_random_data() {
    let op = ring(64);
    let calc = SpectralCalculus::new(&op).unwrap();
    let g = TGrid::new(1.0, 16.0, 4).unwrap();
    let c = vec![C64::new(1.5, 0.0); 64];
    let r = carleson_characterization(&calc, &psi0(), &c, &g, 1).unwrap();
    assert!(r.carleson < 1e-20 && r.bmo_sq < 1e-20 && !r.inconsistent);
    let ratios: Vec<f64> = (0..5)
        .map(|s| {
            carleson_characterization(&calc, &psi0(), &rand_vec(64, 40 + s), &g, 1)
                .unwrap()
                .ratio
                .unwrap()
        })
        .collect();
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(lo > 0.0 && hi / lo < 50.0, "{ratios:?}");
}

#[test]
fn pairing_reproduces_inner_products() {
    let op = ring(64);
    let calc = SpectralCalculus::new(&op).unwrap();
    let (pt, _) = normalize_pair(&psi0(), &psi0()).unwrap();
    let g = TGrid::covering(&op, 1e-8, 1e4, 16).unwrap();
    let f = op.project_range(&rand_vec(64, 1));
    let h = op.project_range(&rand_vec(64, 2));
    let r = reproducing_pairing_check(&calc, &psi0(), &pt, &f, &h, &g).unwrap();
    assert!(r.residual <= 1e-3 * r.exact.norm(), "{r:?}");
    let narrow = reproducing_pairing_check(&calc, &psi0(), &pt, &f, &h, &TGrid::new(0.5, 4.0, 16).unwrap()).unwrap();
    assert!(narrow.residual > r.residual);
    let one = vec![C64::new(1.0, 0.0); 64];
    let z = reproducing_pairing_check(&calc, &psi0(), &pt, &one, &h, &g).unwrap();
    assert!(z.exact.norm() < 1e-12 && z.approx.norm() < 1e-12);
}

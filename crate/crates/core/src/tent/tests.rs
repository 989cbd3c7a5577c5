use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::calculus::SpectralCalculus;
use crate::space::{build_grid_space, Topology};
use crate::testutil::{rand_vec, ring};

fn ring_space(n: usize) -> MetricMeasureSpace {
    build_grid_space(&[n], 1.0, Topology::Periodic).unwrap()
}

fn gaussian_field(space: &MetricMeasureSpace, g: TGrid, seed: u64) -> FieldFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FieldFunction::from_fn(g, space.len(), |_, _, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
    .unwrap()
}

fn spike(n: usize, g: TGrid, y0: usize, k0: usize) -> FieldFunction {
    FieldFunction::from_fn(g, n, |y, _, k| C64::new((y == y0 && k == k0) as u8 as f64, 0.0)).unwrap()
}

#[test]
fn zero_field_gives_zero() {
    let s = ring_space(16);
    let g = TGrid::new(1.0, 4.0, 2).unwrap();
    let z = FieldFunction::zeros(g, 16);
    assert!(conical_square(&s, &z).unwrap().iter().all(|&v| v == 0.0));
    assert!(carleson_functional(&s, &z).unwrap().iter().all(|&v| v == 0.0));
    assert_eq!(carleson_norm(&s, &z).unwrap(), 0.0);
    assert!(nontangential_max(&s, &z).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn scale_only_field() {
    let s = build_grid_space(&[12, 10], 0.5, Topology::Bounded).unwrap();
    let g = TGrid::new(0.5, 4.0, 3).unwrap();
    let h = |t: f64| C64::new(t.sin(), 0.3 * t);
    let f = FieldFunction::from_fn(g, s.len(), |_, t, _| h(t)).unwrap();
    let want: f64 = g.nodes().iter().map(|&t| h(t).norm_sqr() * g.dlog()).sum();
    for a in conical_square(&s, &f).unwrap() {
        assert!((a * a - want).abs() < 1e-12 * want);
    }
    let top = g.nodes().iter().map(|&t| h(t).norm()).fold(0.0, f64::max);
    assert!(nontangential_max(&s, &f).unwrap().iter().all(|&v| v == top));
}

#[test]
fn single_spike() {
    let s = build_grid_space(&[9, 7], 1.0, Topology::Bounded).unwrap();
    let g = TGrid::new(1.0, 8.0, 2).unwrap();
    let (y0, k0) = (s.index(&[2, 3]), 3);
    let t0 = g.nodes()[k0];
    let f = spike(s.len(), g, y0, k0);
    let a = conical_square(&s, &f).unwrap();
    let w = s.weights();
    let mut l1 = 0.0;
    for x in 0..s.len() {
        let want = if s.dist(x, y0) < t0 {
            w[y0] / s.volume(x, t0) * g.dlog()
        } else {
            0.0
        };
        assert!((a[x] * a[x] - want).abs() < 1e-14);
        l1 += w[x] * want.sqrt();
    }
    assert!((tent_norm(&s, &f, 1.0).unwrap() - l1).abs() < 1e-12);
    let fs = nontangential_max(&s, &f).unwrap();
    for x in 0..s.len() {
        assert_eq!(fs[x], (s.dist(x, y0) < t0) as u8 as f64);
    }
}

#[test]
fn carleson_of_truncated_constant() {
    let s = ring_space(64);
    let g = TGrid::new(1.0, 16.0, 4).unwrap();
    let r = 4.0;
    let f = FieldFunction::from_fn(g, 64, |_, t, _| C64::new((t <= r) as u8 as f64, 0.0)).unwrap();
    let bound: f64 = g.nodes().iter().filter(|&&t| t <= r).map(|_| g.dlog()).sum();
    let c = carleson_functional(&s, &f).unwrap();
    assert!(c.iter().all(|&v| v * v <= bound * (1.0 + 1e-12)));
    assert!(c.iter().all(|&v| v > 0.0));
    let dens = FieldFunction::new(g, 64, f.abs_sq().into_iter().map(|v| C64::new(v, 0.0)).collect()).unwrap();
    let cmax = c.iter().copied().fold(0.0, f64::max);
    assert!((carleson_norm(&s, &dens).unwrap() - cmax * cmax).abs() < 1e-14);
    assert!((tent_norm(&s, &f, f64::INFINITY).unwrap() - cmax).abs() < 1e-15);
}

#[test]
fn periodic_aperture_is_exact() {
    let s = build_grid_space(&[16, 12], 1.0, Topology::Periodic).unwrap();
    let g = TGrid::new(1.0, 8.0, 4).unwrap();
    let f = gaussian_field(&s, g, 3);
    let plain: f64 = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v.norm_sqr() * s.weights()[i % s.len()])
        .sum::<f64>()
        * g.dlog();
    let t2 = tent_norm(&s, &f, 2.0).unwrap();
    assert!((t2 * t2 - plain).abs() < 1e-12 * plain);
}

#[test]
fn density_must_be_nonnegative() {
    let s = ring_space(8);
    let g = TGrid::new(1.0, 2.0, 1).unwrap();
    let f = FieldFunction::from_fn(g, 8, |y, _, _| C64::new(y as f64 - 3.0, 0.0)).unwrap();
    assert!(carleson_norm(&s, &f).is_err());
    assert!(tent_norm(&s, &f, 0.5).is_err());
}

#[test]
fn nh_preserves_constants() {
    let op = ring(32);
    let calc = SpectralCalculus::new(&op).unwrap();
    let g = TGrid::new(0.5, 8.0, 4).unwrap();
    let one = vec![C64::new(1.0, 0.0); 32];
    for v in maximal_nh(&calc, &one, &g).unwrap() {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn nh_is_bounded_and_dominated() {
    let op = ring(64);
    let s = op.space();
    let calc = SpectralCalculus::new(&op).unwrap();
    let g = TGrid::new(0.5, 16.0, 4).unwrap();
    let mut radii = g.nodes();
    radii.push(s.diam());
    let mut l2 = Vec::new();
    let mut pointwise = 0.0f64;
    for seed in 0..20 {
        let f = rand_vec(64, seed);
        let nh = maximal_nh(&calc, &f, &g).unwrap();
        let m2 = maximal_m2(s, &f, &radii).unwrap();
        for (a, b) in nh.iter().zip(&m2) {
            pointwise = pointwise.max(a / b);
        }
        l2.push(norm_p_real(s.weights(), &nh, 2.0) / crate::linalg::norm2(s.weights(), &f));
    }
    let (lo, hi) = l2
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 2.0, "{lo} {hi}");
    assert!(pointwise.is_finite() && pointwise < 10.0, "{pointwise}");
}

#[test]
fn zero_partner_is_vacuous() {
    let s = ring_space(32);
    let g = TGrid::new(1.0, 8.0, 4).unwrap();
    let f = gaussian_field(&s, g, 1);
    let z = FieldFunction::zeros(g, 32);
    for p in [1.0, 2.0, 4.0] {
        let r = duality_checks(&s, &f, &z, p).unwrap();
        assert_eq!(r.pairing, 0.0);
        assert!(r.cone.is_none() && r.carleson.is_none() && r.holder.is_none() && r.product.is_none());
    }
}

#[test]
fn cone_ratio_stable_under_refinement() {
    let s = ring_space(64);
    let ratio_at = |q: u32| -> f64 {
        let g = TGrid::new(1.0, 8.0, q).unwrap();
        (0..5)
            .map(|seed| {
                duality_checks(
                    &s,
                    &gaussian_field(&s, g, seed),
                    &gaussian_field(&s, g, 100 + seed),
                    2.0,
                )
            })
            .map(|r| r.unwrap().cone.unwrap())
            .fold(0.0, f64::max)
    };
    let (a, b) = (ratio_at(4), ratio_at(8));
    assert!(a <= 1.0 + 1e-12 && b <= 1.0 + 1e-12);
    assert!((a / b - 1.0).abs() < 0.2, "{a} {b}");
}

#[test]
fn product_ratio_has_no_outliers() {
    let s = ring_space(64);
    let g = TGrid::new(1.0, 8.0, 4).unwrap();
    let mut v: Vec<f64> = (0..20)
        .map(|seed| {
            let r = duality_checks(&s, &gaussian_field(&s, g, seed), &gaussian_field(&s, g, 50 + seed), 4.0).unwrap();
            r.product.unwrap()
        })
        .collect();
    v.sort_by(f64::total_cmp);
    let median = v[10];
    assert!(v.iter().all(|&x| x <= 10.0 * median));
}

#[test]
fn carleson_duality_is_bounded() {
    let s = ring_space(64);
    let g = TGrid::new(1.0, 16.0, 4).unwrap();
    for seed in 0..5 {
        let f = gaussian_field(&s, g, seed);
        let d = gaussian_field(&s, g, 10 + seed);
        let dens = FieldFunction::new(g, 64, d.abs_sq().into_iter().map(|v| C64::new(v, 0.0)).collect()).unwrap();
        let r = carleson_duality(&s, &f, &dens).unwrap().unwrap();
        assert!(r.is_finite() && r < 10.0, "{r}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn monotone_and_homogeneous(seed in 0u64..1000, c in 0.1f64..5.0) {
        let s = ring_space(24);
        let g = TGrid::new(1.0, 8.0, 2).unwrap();
        let f = gaussian_field(&s, g, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let shrink: Vec<C64> = f.values().iter().map(|v| v * rng.random::<f64>()).collect();
        let small = FieldFunction::new(g, 24, shrink).unwrap();
        let ops: [fn(&MetricMeasureSpace, &FieldFunction) -> Result<Vec<f64>>; 3] =
            [conical_square, carleson_functional, nontangential_max];
        for op in ops {
            let big = op(&s, &f).unwrap();
            let lo = op(&s, &small).unwrap();
            let scaled = op(&s, &f.scale(C64::new(0.0, c))).unwrap();
            for x in 0..24 {
                prop_assert!(lo[x] <= big[x] * (1.0 + 1e-12));
                prop_assert!((scaled[x] - c * big[x]).abs() <= 1e-12 * c * big[x].max(1e-300));
            }
        }
        let fs = nontangential_max(&s, &f).unwrap();
        let ss = nontangential_max(&s, &small).unwrap();
        let ps = nontangential_max(&s, &f.mul(&small).unwrap()).unwrap();
        for x in 0..24 {
            prop_assert!(ps[x] <= fs[x] * ss[x] * (1.0 + 1e-12));
        }
    }
}

//! Suites on the functional calculus: oracle agreement, the quadratic
//! estimate, reproduction, off-diagonal decay and conservation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calculus::{
    calderon_reconstruct, conservation_check, exp_monomial, exp_monomial_power, measure_offdiag_lp,
    measure_offdiag_psi, normalize_pair, offdiag_window, one_minus_exp, pairing_integral, quadratic_norms, rational,
    semigroup_symbol, separated_sets, time_scale, Calculus, ContourCalculus, SpectralCalculus,
};
use crate::error::Result;
use crate::hardy::reproducing_pairing_check;
use crate::linalg::{mat_from_col, norm2};
use crate::operator::{random_vector, SectorialOperator};
use crate::paraproduct::gaussian_probes;
use crate::space::Topology;
use crate::tent::TGrid;

use super::{
    col, describe, describe_grid, engine_for, grid_operator, max_of, min_of, rel_err, ring, Coeffs, Ctx, SuiteOutput,
};
use crate::harness::report::Table;

struct Plan {
    op: SectorialOperator,
    label: String,
    trials: usize,
}

fn plan(dims: &[usize], topo: Topology, coeffs: Coeffs, trials: usize) -> Result<Plan> {
    Ok(Plan {
        op: grid_operator(dims, topo, coeffs)?,
        label: describe(dims, topo, coeffs),
        trials,
    })
}

/// Contour engine against the dense spectral oracle on random triples.
pub(super) fn calculus(cx: &Ctx) -> Result<SuiteOutput> {
    let seed = cx.seed();
    let plans = match cx.custom()? {
        Some(op) => vec![Plan {
            op,
            label: "configured operator".into(),
            trials: cx.trials(50, 10),
        }],
        None => {
            let (a, b, c) = (cx.n(512, 64), cx.n(256, 48), cx.n(16, 6));
            let real = Coeffs::Random { angle: 0.0, seed };
            let complex = Coeffs::Random {
                angle: 0.6,
                seed: seed + 1,
            };
            vec![
                plan(&[a], Topology::Periodic, real, cx.trials(25, 4))?,
                plan(&[b], Topology::Periodic, complex, cx.trials(15, 3))?,
                plan(&[c, c], Topology::Bounded, complex, cx.trials(10, 2))?,
            ]
        }
    };
    let pool = vec![
        exp_monomial(1.0)?,
        exp_monomial(2.0)?,
        exp_monomial(0.5)?,
        rational(1.0, 1.0)?,
        rational(2.0, 2.0)?,
        rational(0.5, 1.5)?,
        one_minus_exp(2)?,
        exp_monomial_power(2)?,
        semigroup_symbol(),
    ];
    let mut out = SuiteOutput::default();
    let mut table = Table::new("calculus_errors", &["operator", "symbol", "t", "rel_err"]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, p) in plans.iter().enumerate() {
        let n = p.op.len();
        // past s·λ₊ = 4 every symbol has decayed to round-off level
        let (lmin, _) = p.op.spectral_bounds()?;
        let active = (4.0 / lmin).powf(1.0 / p.op.order_2m() as f64);
        let tmax = (p.op.space().diam() / 2.0).min(active).max(1.0);
        let triples: Vec<(usize, f64, Vec<_>)> = (0..p.trials)
            .map(|_| {
                let k = rng.random_range(0..pool.len());
                let t = (rng.random_range(0.2f64.ln()..tmax.ln())).exp();
                (k, t, random_vector(&mut rng, n))
            })
            .collect();
        let contour = ContourCalculus::new(&p.op);
        let spectral = SpectralCalculus::new(&p.op)?;
        let errs = triples
            .par_iter()
            .map(|(k, t, f)| {
                let s = time_scale(&p.op, *t);
                let fm = mat_from_col(f);
                let a = contour.apply(&pool[*k], s, &fm, false)?;
                let b = spectral.apply(&pool[*k], s, &fm, false)?;
                Ok(rel_err(p.op.weights(), a.col_as_slice(0), b.col_as_slice(0)))
            })
            .collect::<Result<Vec<f64>>>()?;
        for ((k, t, _), e) in triples.iter().zip(&errs) {
            table.push(vec![i as f64, *k as f64, *t, *e]);
        }
        out.records.push(
            cx.at_most(format!("max_rel_err[{i}]"), max_of(&errs), "calculus_rel")
                .on(format!("{}; t log-uniform in [0.2, {tmax:.3e}]", p.label)),
        );
    }
    out.tables.push(table);
    Ok(out)
}

/// `∫|ψ(tL)f|² dt/t = ‖Pf‖² ∫|ψ|² du/u` on random data.
pub(super) fn quadratic(cx: &Ctx) -> Result<SuiteOutput> {
    let (op, label) = match cx.custom()? {
        Some(op) => (op, "configured operator".to_string()),
        None => {
            let n = cx.n(256, 64);
            (ring(n)?, describe(&[n], Topology::Periodic, Coeffs::Unit))
        }
    };
    let calc = engine_for(&op)?;
    let psi = cx.psi(exp_monomial(1.0)?);
    let expected = pairing_integral(&psi, &psi)?;
    let (lmin, lmax) = op.spectral_bounds()?;
    // ψ(tL) takes t itself as the scale here, so the grid covers tλ directly
    let tgrid = cx.grid_or(|| TGrid::new(1e-8 / lmax, 1e4 / lmin, 16))?;
    let trials = cx.trials(100, 10);
    let f = gaussian_probes(op.len(), trials, cx.seed());
    let norms = quadratic_norms(calc.as_ref(), &psi, &f, &tgrid)?;
    let w = op.weights();
    let ratios: Vec<f64> = norms
        .iter()
        .enumerate()
        .map(|(j, q)| {
            let pf = norm2(w, &op.project_range(&col(&f, j)));
            q * q / (pf * pf)
        })
        .collect();
    let dev = max_of(&ratios.iter().map(|r| (r / expected - 1.0).abs()).collect::<Vec<_>>());
    let grid = format!("{label}; {}", describe_grid(&tgrid));
    let mut out = SuiteOutput::default();
    out.records
        .push(cx.at_most("max_rel_deviation", dev, "quadratic_rel").on(&grid));
    out.records.push(cx.info("expected_constant", expected).on(&grid));
    out.records.push(cx.info("min_ratio", min_of(&ratios)).on(&grid));
    out.records.push(cx.info("max_ratio", max_of(&ratios)).on(&grid));
    out.tables
        .push(Table::histogram("quadratic_ratio_histogram", &ratios, 20));
    Ok(out)
}

/// Reconstruction residual on a wide grid, under widening and under
/// doubling of `q`; the pairing form of the same identity.
pub(super) fn calderon(cx: &Ctx) -> Result<SuiteOutput> {
    let (op, label) = match cx.custom()? {
        Some(op) => (op, "configured operator".to_string()),
        None => {
            let n = cx.n(128, 32);
            (ring(n)?, describe(&[n], Topology::Periodic, Coeffs::Unit))
        }
    };
    let calc = engine_for(&op)?;
    let calc = calc.as_ref();
    let psi = cx.psi(exp_monomial(1.0)?);
    let (pt, _) = normalize_pair(&psi, &cx.psi_tilde(psi.clone()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cx.seed());
    let f = random_vector(&mut rng, op.len());
    let g = random_vector(&mut rng, op.len());
    let mut out = SuiteOutput::default();

    let wide = cx.grid_or(|| TGrid::covering(&op, 1e-8, 1e4, 16))?;
    let r = calderon_reconstruct(calc, &psi, &pt, &f, &wide)?;
    let grid = format!("{label}; {}", describe_grid(&wide));
    out.records
        .push(cx.at_most("wide_residual", r.residual, "calderon_residual").on(&grid));

    let base = cx.grid(TGrid::covering(&op, 1e-1, 1e1, 16)?);
    let mut widening = Table::new("calderon_widening", &["factor", "residual"]);
    let mut res = Vec::new();
    for k in [1.0, 4.0, 16.0, 64.0] {
        let r = calderon_reconstruct(calc, &psi, &pt, &f, &base.widen(k))?.residual;
        widening.push(vec![k, r]);
        res.push(r);
    }
    let step = max_of(&res.windows(2).map(|w| w[1] / w[0]).collect::<Vec<_>>());
    out.records.push(
        cx.at_most("widening_max_step_ratio", step, "calderon_widening")
            .on(format!("{label}; {} widened by 1, 4, 16, 64", describe_grid(&base))),
    );

    // below this floor residuals are round-off and carry no rate
    const FLOOR: f64 = 1e-12;
    let mut qtable = Table::new("calderon_q", &["q", "residual"]);
    let mut res = Vec::new();
    for q in [1, 2, 4] {
        let g = TGrid::covering(&op, 1e-8, 1e4, cx.q(q))?.widen(cx.knobs.widen);
        let r = calderon_reconstruct(calc, &psi, &pt, &f, &g)?.residual;
        qtable.push(vec![g.q as f64, r]);
        res.push(r);
    }
    let gains: Vec<f64> = res
        .windows(2)
        .filter(|w| w[0] > FLOOR)
        .map(|w| w[0] / w[1].max(f64::MIN_POSITIVE))
        .collect();
    let gain = if gains.is_empty() {
        f64::INFINITY
    } else {
        min_of(&gains)
    };
    out.records.push(
        cx.at_least("q_doubling_min_gain", gain, "calderon_q_gain")
            .on(format!("{label}; q = 1, 2, 4")),
    );

    let (pf, pg) = (op.project_range(&f), op.project_range(&g));
    let p = reproducing_pairing_check(calc, &psi, &pt, &pf, &pg, &wide)?;
    let rel = p.residual / p.exact.norm().max(f64::MIN_POSITIVE);
    out.records
        .push(cx.at_most("pairing_rel_residual", rel, "pairing_residual").on(&grid));
    out.tables.push(widening);
    out.tables.push(qtable);
    Ok(out)
}

/// Fitted decay order of `ψ(t^{2m}L)` between separated sets.
pub(super) fn offdiag(cx: &Ctx) -> Result<SuiteOutput> {
    let s = |n: usize| n * cx.knobs.n_factor;
    let configs: Vec<(Vec<usize>, f64)> = if cx.quick() {
        vec![(vec![s(128)], 16.0), (vec![s(16), s(16)], 8.0)]
    } else {
        vec![
            (vec![s(512)], 24.0),
            (vec![s(512)], 32.0),
            (vec![s(512)], 48.0),
            (vec![s(64), s(64)], 24.0),
            (vec![s(32), s(128)], 32.0),
        ]
    };
    let psi = cx.psi(rational(2.0, 2.0)?);
    let q = cx.q(4);
    let fits = configs
        .par_iter()
        .map(|(dims, d)| {
            let op = grid_operator(dims, Topology::Periodic, Coeffs::Unit)?;
            let space = op.space();
            let center = space.index(&dims.iter().map(|n| n / 2).collect::<Vec<_>>());
            let (e, f) = separated_sets(space, center, d / 4.0, *d);
            let ts = offdiag_window(space.min_spacing(), *d, q)?;
            measure_offdiag_psi(&ContourCalculus::new(&op), &psi, &e, &f, &ts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = SuiteOutput::default();
    for ((dims, d), r) in configs.iter().zip(&fits) {
        let label = describe(dims, Topology::Periodic, Coeffs::Unit);
        let tag = format!(
            "{}_d{d}",
            dims.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x")
        );
        let flags = if r.saturated {
            vec!["saturated below round-off".to_string()]
        } else {
            vec![]
        };
        out.records.push(
            cx.at_least(format!("gamma[{tag}]"), r.gamma.unwrap_or(f64::NAN), "offdiag_gamma")
                .on(format!("{label}; d = {d}; t in [1, d/4], q = {q}"))
                .flagged(&flags),
        );
        let mut t = Table::new(format!("offdiag_{tag}"), &["log_distance_ratio", "log_norm"]);
        for p in r.points.iter().filter(|p| p.norm > 0.0) {
            t.push(vec![p.x, p.norm.ln()]);
        }
        out.tables.push(t);
    }
    // L^p̃ → L² annular decay of the same symbol, for context
    let n = cx.n(64, 32);
    let op = ring(n)?;
    let lp = measure_offdiag_lp(&SpectralCalculus::new(&op)?, 1.5, &[2.0, 4.0], &[n / 2])?;
    out.records.push(
        cx.info("lp_eps_star", lp.eps_star)
            .on(describe(&[n], Topology::Periodic, Coeffs::Unit)),
    );
    Ok(out)
}

/// `e^{-tL}1 = 1` and `ψ(tL)1 = 0` on periodic builds.
pub(super) fn conservation(cx: &Ctx) -> Result<SuiteOutput> {
    let seed = cx.seed();
    let plans = match cx.custom()? {
        Some(op) => vec![Plan {
            op,
            label: "configured operator".into(),
            trials: 1,
        }],
        None => {
            let (a, c) = (cx.n(256, 32), cx.n(16, 4));
            vec![
                plan(&[a], Topology::Periodic, Coeffs::Random { angle: 0.0, seed }, 1)?,
                plan(
                    &[a],
                    Topology::Periodic,
                    Coeffs::Random {
                        angle: 0.6,
                        seed: seed + 1,
                    },
                    1,
                )?,
                plan(
                    &[c, c],
                    Topology::Periodic,
                    Coeffs::Random {
                        angle: 0.6,
                        seed: seed + 2,
                    },
                    1,
                )?,
            ]
        }
    };
    let psi = cx.psi(exp_monomial(1.0)?);
    let mut out = SuiteOutput::default();
    for (i, p) in plans.iter().enumerate() {
        let tgrid = cx.grid_or(|| TGrid::default_for(&p.op))?;
        let r = conservation_check(&ContourCalculus::new(&p.op), &psi, &tgrid)?;
        let grid = format!("{}; {}", p.label, describe_grid(&tgrid));
        out.records.push(
            cx.at_most(format!("semigroup[{i}]"), r.semigroup, "conservation")
                .on(&grid),
        );
        out.records
            .push(cx.at_most(format!("psi[{i}]"), r.psi, "conservation").on(&grid));
    }
    Ok(out)
}

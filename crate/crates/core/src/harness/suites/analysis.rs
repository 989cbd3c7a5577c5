//! Suites on BMO, tent spaces and molecules.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::calculus::{exp_monomial, SpectralCalculus};
use crate::error::Result;
use crate::hardy::{carleson_characterization, hardy_norm, molecule_make, psi_field};
use crate::linalg::norm2;
use crate::paraproduct::{bmo_order, bounded_probes, gaussian_probes, measure_para_hp_l1, ParaproductSpec};
use crate::space::{Ball, Topology};
use crate::tent::{carleson_duality, duality_checks, maximal_m2, maximal_nh, tent_norm, TGrid};

use super::{col, describe, describe_grid, max_of, min_of, ring, Coeffs, Ctx, SuiteOutput};
use crate::harness::report::Table;

fn spread(v: &[f64]) -> f64 {
    max_of(v) / min_of(v)
}

/// `‖ν_{ψ,b}‖_𝒞 / ‖b‖²_BMO` over random bounded `b`, per size.
pub(super) fn carleson(cx: &Ctx) -> Result<SuiteOutput> {
    let sizes = cx.sizes(&[128, 256], &[32, 64]);
    let trials = cx.trials(50, 4);
    let psi = cx.psi(exp_monomial(1.0)?);
    let tgrid = cx.grid_or(|| TGrid::new(1.0, if cx.quick() { 8.0 } else { 32.0 }, 4))?;
    let mut out = SuiteOutput::default();
    let mut ends = Vec::new();
    for &n in &sizes {
        let op = ring(n)?;
        let calc = SpectralCalculus::new(&op)?;
        let order = bmo_order(&calc);
        let b = bounded_probes(n, trials, cx.seed());
        let reps = (0..trials)
            .into_par_iter()
            .map(|j| carleson_characterization(&calc, &psi, &col(&b, j), &tgrid, order))
            .collect::<Result<Vec<_>>>()?;
        let ratios: Vec<f64> = reps.iter().filter_map(|r| r.ratio).collect();
        let inconsistent = reps.iter().filter(|r| r.inconsistent).count();
        let grid = format!(
            "{}; {}",
            describe(&[n], Topology::Periodic, Coeffs::Unit),
            describe_grid(&tgrid)
        );
        let (c, big_c) = (min_of(&ratios), max_of(&ratios));
        out.records.push(
            cx.at_most(format!("spread[N={n}]"), big_c / c, "carleson_spread")
                .on(&grid),
        );
        out.records.push(cx.info(format!("lower[N={n}]"), c).on(&grid));
        out.records.push(cx.info(format!("upper[N={n}]"), big_c).on(&grid));
        out.records
            .push(cx.info(format!("inconsistent[N={n}]"), inconsistent as f64).on(&grid));
        out.tables
            .push(Table::histogram(format!("carleson_ratio_histogram_N{n}"), &ratios, 10));
        ends.push((n, c, big_c));
    }
    for w in ends.windows(2) {
        let ((n0, c0, u0), (n1, c1, u1)) = (w[0], w[1]);
        let tag = format!("N={n0}->{n1}");
        out.records
            .push(cx.at_most(format!("lower_drift[{tag}]"), (c1 / c0 - 1.0).abs(), "carleson_drift"));
        out.records
            .push(cx.at_most(format!("upper_drift[{tag}]"), (u1 / u0 - 1.0).abs(), "carleson_drift"));
    }
    Ok(out)
}

const TENT_CONSTANTS: [&str; 5] = [
    "holder_p1",
    "holder_p2",
    "cone_carleson",
    "carleson_duality",
    "tent_product_p4",
];

/// Constants of the tent-space pairings across `N` and `q`.
pub(super) fn tent_duality(cx: &Ctx) -> Result<SuiteOutput> {
    let sizes = cx.sizes(&[64, 128, 256], &[16, 32]);
    let qs: Vec<u32> = cx.pick(vec![8, 16], vec![2, 4]).into_iter().map(|q| cx.q(q)).collect();
    let trials = cx.trials(5, 2);
    let top = cx.pick(16.0, 4.0);
    let psi = cx.psi(exp_monomial(1.0)?);
    let cells: Vec<(usize, u32)> = sizes.iter().flat_map(|&n| qs.iter().map(move |&q| (n, q))).collect();
    let consts = cells
        .par_iter()
        .map(|&(n, q)| {
            let op = ring(n)?;
            let space = op.space();
            let calc = SpectralCalculus::new(&op)?;
            let tgrid = cx.grid(TGrid::new(1.0, top, 1)?);
            let tgrid = TGrid { q, ..tgrid };
            let data = gaussian_probes(n, 2 * trials, cx.seed());
            let mut best = [0.0f64; 5];
            for j in 0..trials {
                let f = psi_field(&calc, &psi, &col(&data, j), &tgrid)?;
                let g = psi_field(&calc, &psi, &col(&data, trials + j), &tgrid)?;
                let d1 = duality_checks(space, &f, &g, 1.0)?;
                let d2 = duality_checks(space, &f, &g, 2.0)?;
                let d4 = duality_checks(space, &f, &g, 4.0)?;
                let ga = g.abs();
                let cd = carleson_duality(space, &f, &ga.mul(&ga)?)?;
                let vals = [d1.holder, d2.holder, d2.carleson, cd, d4.product];
                for (b, v) in best.iter_mut().zip(vals) {
                    *b = b.max(v.unwrap_or(0.0));
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<[f64; 5]>>>()?;
    let mut out = SuiteOutput::default();
    let mut table = Table::new(
        "tent_constants",
        &[
            "N",
            "q",
            TENT_CONSTANTS[0],
            TENT_CONSTANTS[1],
            TENT_CONSTANTS[2],
            TENT_CONSTANTS[3],
            TENT_CONSTANTS[4],
        ],
    );
    for ((n, q), c) in cells.iter().zip(&consts) {
        let mut row = vec![*n as f64, *q as f64];
        row.extend_from_slice(c);
        table.push(row);
    }
    let grid = format!("periodic N in {sizes:?}, q in {qs:?}, t in [1, {top}]");
    for (i, name) in TENT_CONSTANTS.iter().enumerate() {
        let v: Vec<f64> = consts.iter().map(|c| c[i]).collect();
        out.records.push(cx.info(format!("{name}_max"), max_of(&v)).on(&grid));
        out.records.push(
            cx.at_most(format!("{name}_spread"), spread(&v), "tent_spread")
                .on(&grid),
        );
        // growth: smallest factor between consecutive sizes, worst over q
        let growth = (0..qs.len())
            .map(|k| {
                let by_n: Vec<f64> = (0..sizes.len()).map(|s| consts[s * qs.len() + k][i]).collect();
                let steps: Vec<f64> = by_n.windows(2).map(|w| w[1] / w[0]).collect();
                if steps.is_empty() {
                    1.0
                } else {
                    min_of(&steps)
                }
            })
            .fold(0.0f64, f64::max);
        out.records
            .push(cx.at_most(format!("{name}_growth"), growth, "tent_growth").on(&grid));
    }
    out.tables.push(table);

    // maximal functions and the T² norm on the smallest grid, for context
    let n = sizes[0];
    let op = ring(n)?;
    let calc = SpectralCalculus::new(&op)?;
    let tgrid = TGrid::new(1.0, top, qs[0])?;
    let f = col(&gaussian_probes(n, 1, cx.seed() + 1), 0);
    let nh = maximal_nh(&calc, &f, &tgrid)?;
    let m2 = maximal_m2(op.space(), &f, &tgrid.nodes())?;
    let w = op.weights();
    let real = |v: &[f64]| v.iter().map(|x| C64::new(*x, 0.0)).collect::<Vec<_>>();
    let g = format!(
        "{}; {}",
        describe(&[n], Topology::Periodic, Coeffs::Unit),
        describe_grid(&tgrid)
    );
    out.records.push(
        cx.info("nh_over_m2", norm2(w, &real(&nh)) / norm2(w, &real(&m2)))
            .on(&g),
    );
    let field = psi_field(&calc, &psi, &f, &tgrid)?;
    out.records
        .push(cx.info("t2_norm", tent_norm(op.space(), &field, 2.0)?).on(&g));
    Ok(out)
}

/// Molecules: their `H¹` norms and their images under `Π(f, ·)`.
pub(super) fn molecules(cx: &Ctx) -> Result<SuiteOutput> {
    let sizes = cx.sizes(&[128, 256], &[32, 64]);
    let qs: Vec<u32> = cx.pick(vec![8, 16], vec![2, 4]).into_iter().map(|q| cx.q(q)).collect();
    let radii: Vec<f64> = cx.pick(vec![2.0, 3.0, 4.0, 6.0, 8.0], vec![2.0, 3.0]);
    let fracs: Vec<f64> = cx.pick(vec![0.125, 0.375, 0.625, 0.875], vec![0.25, 0.75]);
    let psi0 = cx.psi(exp_monomial(1.0)?);
    let cells: Vec<(usize, u32)> = sizes.iter().flat_map(|&n| qs.iter().map(move |&q| (n, q))).collect();
    let rows = cells
        .par_iter()
        .map(|&(n, q)| {
            let op = ring(n)?;
            let calc = SpectralCalculus::new(&op)?;
            let tgrid = cx.grid(TGrid::covering(&op, 1e-4, 1e3, 1)?);
            let tgrid = TGrid { q, ..tgrid };
            let mut mols = Vec::new();
            for &fr in &fracs {
                for &r in &radii {
                    let ball = Ball::new((fr * n as f64) as usize, r)?;
                    mols.push(molecule_make(&calc, &ball, 1, 0.5)?);
                }
            }
            let invalid = mols.iter().filter(|m| !m.valid).count();
            let hardy = mols
                .iter()
                .map(|m| Ok(hardy_norm(&calc, &m.m, 1.0, &psi0, &tgrid)?.value))
                .collect::<Result<Vec<f64>>>()?;
            let spec = ParaproductSpec::normalized(&op, psi0.clone(), psi0.clone(), tgrid)?;
            let f = col(&bounded_probes(n, 1, cx.seed()), 0);
            let para = measure_para_hp_l1(&calc, &spec, &f, &mols)?.sup;
            Ok((invalid, max_of(&hardy), para, spec.warnings))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = SuiteOutput::default();
    let grid = format!(
        "periodic N in {sizes:?}, q in {qs:?}; {} molecules of order 1",
        radii.len() * fracs.len()
    );
    let mut table = Table::new("molecule_sups", &["N", "q", "hardy_sup", "para_sup"]);
    for ((n, q), (_, h, p, _)) in cells.iter().zip(&rows) {
        table.push(vec![*n as f64, *q as f64, *h, *p]);
    }
    let invalid: usize = rows.iter().map(|r| r.0).sum();
    let hardy: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let para: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let flags = rows[0].3.clone();
    out.records.push(cx.info("invalid_molecules", invalid as f64).on(&grid));
    out.records.push(cx.info("hardy_sup", max_of(&hardy)).on(&grid));
    out.records.push(
        cx.at_most("hardy_drift", spread(&hardy) - 1.0, "molecule_drift")
            .on(&grid),
    );
    out.records
        .push(cx.info("para_sup", max_of(&para)).on(&grid).flagged(&flags));
    out.records.push(
        cx.at_most("para_drift", spread(&para) - 1.0, "molecule_drift")
            .on(&grid)
            .flagged(&flags),
    );
    out.tables.push(table);
    Ok(out)
}

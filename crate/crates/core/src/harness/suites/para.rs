//! Paraproduct suites.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::calculus::{
    exp_monomial, exp_monomial_power, offdiag_window, one_minus_exp, separated_sets, SpectralCalculus,
};
use crate::error::Result;
use crate::hardy::critical_order;
use crate::operator::SectorialOperator;
use crate::paraproduct as pp;
use crate::paraproduct::{
    bounded_probes, gaussian_probes, leibniz_check, measure_para_l2, measure_para_linf_l2, measure_para_lp_hp,
    structured_probes, ParaproductSpec,
};
use crate::space::Topology;
use crate::tent::TGrid;

use super::{col, describe, describe_grid, max_of, min_of, ring, Coeffs, Ctx, SuiteOutput};
use crate::harness::report::Table;

/// A fixed BMO symbol: a smooth wave plus a jump pattern.
fn symbol_b(n: usize) -> Vec<C64> {
    use std::f64::consts::TAU;
    (0..n)
        .map(|x| {
            let x = x as f64;
            C64::new((TAU * x / 32.0).cos() + 0.5 * (TAU * x / 64.0).sin().signum(), 0.0)
        })
        .collect()
}

fn ring_spec(op: &SectorialOperator, cx: &Ctx, a: f64, lo: f64, hi: f64, q: u32) -> Result<ParaproductSpec> {
    let psi = cx.psi(exp_monomial(a)?);
    let pt = cx.psi_tilde(psi.clone());
    let tgrid = cx.grid_or(|| TGrid::covering(op, lo, hi, q))?;
    ParaproductSpec::normalized(op, psi, pt, tgrid)
}

/// `sup ‖Π_b f‖₂ / (‖b‖_BMO ‖f‖₂)` across sizes; it must stay in a band.
pub(super) fn para_l2(cx: &Ctx) -> Result<SuiteOutput> {
    let sizes = cx.sizes(&[128, 256, 512], &[32, 64]);
    let trials = cx.trials(100, 5);
    let reps = sizes
        .par_iter()
        .map(|&n| {
            let op = ring(n)?;
            let calc = SpectralCalculus::new(&op)?;
            let spec = ring_spec(&op, cx, 1.0, 1e-6, 1e4, 8)?;
            let r = measure_para_l2(&calc, &spec, &symbol_b(n), trials, cx.seed())?;
            Ok((r, spec))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = SuiteOutput::default();
    let mut sups = Vec::new();
    for (&n, (r, spec)) in sizes.iter().zip(&reps) {
        let grid = format!(
            "{}; {}",
            describe(&[n], Topology::Periodic, Coeffs::Unit),
            describe_grid(&spec.tgrid)
        );
        out.records
            .push(cx.info(format!("sup[N={n}]"), r.sup).on(&grid).flagged(&spec.warnings));
        out.records.push(cx.info(format!("bmo[N={n}]"), r.scale.bmo).on(&grid));
        out.tables
            .push(Table::histogram(format!("para_l2_ratio_histogram_N{n}"), &r.ratios, 10));
        sups.push(r.sup);
    }
    let flags = reps[0].1.warnings.clone();
    let grid = format!("periodic N in {sizes:?}");
    out.records.push(
        cx.at_most("band", max_of(&sups) / min_of(&sups), "para_l2_band")
            .on(&grid)
            .flagged(&flags),
    );

    // companion bounds on the smallest size, for context
    let n = sizes[0];
    let op = ring(n)?;
    let calc = SpectralCalculus::new(&op)?;
    let spec = &reps[0].1;
    let linf = measure_para_linf_l2(&calc, spec, trials, cx.seed())?;
    let lp = measure_para_lp_hp(&calc, spec, &symbol_b(n), 4.0, trials.min(10), cx.seed())?;
    let grid = describe(&[n], Topology::Periodic, Coeffs::Unit);
    out.records.push(cx.info("linf_l2_sup", linf.sup).on(&grid));
    out.records.push(cx.info("lp4_hp_sup", lp.sup).on(&grid));
    Ok(out)
}

/// `Π_b(1) = Pb` within the reconstruction budget and `Π*_b(1) = 0`.
pub(super) fn para_identity(cx: &Ctx) -> Result<SuiteOutput> {
    let sizes = cx.sizes(&[128, 256], &[32]);
    let mut out = SuiteOutput::default();
    let mut table = Table::new(
        "para_identity",
        &["N", "probe", "residual", "budget", "adjoint", "b_sup"],
    );
    for &n in &sizes {
        let op = ring(n)?;
        let calc = SpectralCalculus::new(&op)?;
        let spec = ring_spec(&op, cx, 1.0, 1e-6, 1e4, 8)?;
        let gauss = gaussian_probes(n, 1, cx.seed());
        let structured = structured_probes(op.space());
        let mut probes = vec![col(&gauss, 0)];
        probes.extend((0..structured.ncols()).map(|j| col(&structured, j)));
        let reps = probes
            .par_iter()
            .map(|b| pp::para_identity(&calc, &spec, b))
            .collect::<Result<Vec<_>>>()?;
        let grid = format!(
            "{}; {}",
            describe(&[n], Topology::Periodic, Coeffs::Unit),
            describe_grid(&spec.tgrid)
        );
        let mut budget_ratio = 0.0f64;
        let mut adjoint_ratio = 0.0f64;
        for (i, r) in reps.iter().enumerate() {
            table.push(vec![n as f64, i as f64, r.residual, r.budget, r.adjoint, r.b_sup]);
            budget_ratio = budget_ratio.max(r.residual / r.budget);
            adjoint_ratio = adjoint_ratio.max(r.adjoint / r.b_sup);
        }
        out.records.push(
            cx.at_most(
                format!("residual_over_budget[N={n}]"),
                budget_ratio,
                "para_identity_budget",
            )
            .on(&grid),
        );
        out.records.push(
            cx.at_most(
                format!("adjoint_over_sup[N={n}]"),
                adjoint_ratio,
                "para_identity_adjoint",
            )
            .on(&grid),
        );
    }
    out.tables.push(table);
    Ok(out)
}

/// Decay order of `1_F φ(t^{2m}L) Π(f, 1_E ·)` against the admissible order.
pub(super) fn para_offdiag(cx: &Ctx) -> Result<SuiteOutput> {
    let n = cx.n(256, 64);
    let sep = cx.pick(32.0, 16.0);
    let op = ring(n)?;
    let calc = SpectralCalculus::new(&op)?;
    let spec = ring_spec(&op, cx, 2.0, 1e-4, 1e3, 8)?;
    let f = col(&bounded_probes(n, 1, cx.seed()), 0);
    let (e, fset) = separated_sets(op.space(), n / 2, sep / 4.0, sep);
    let ts = offdiag_window(1.0, sep, cx.q(4))?;
    let order = critical_order(&op).ceil() as u32 + 1;
    let grid = format!(
        "{}; {}; E radius {}, separation {sep}",
        describe(&[n], Topology::Periodic, Coeffs::Unit),
        describe_grid(&spec.tgrid),
        sep / 4.0
    );
    let mut out = SuiteOutput::default();
    for (tag, phi) in [
        ("one_minus_exp", one_minus_exp(order)?),
        ("exp_monomial_power", exp_monomial_power(order)?),
    ] {
        let r = pp::para_offdiag(&calc, &spec, &f, &e, &fset, &phi, &ts)?;
        let gamma = r.fit.gamma.unwrap_or(f64::NAN);
        let gap = (gamma - r.admissible).abs();
        out.records.push(
            cx.at_most(format!("order_gap[{tag}]"), gap, "para_offdiag_gap")
                .on(&grid)
                .flagged(&spec.warnings),
        );
        out.records.push(cx.info(format!("gamma[{tag}]"), gamma).on(&grid));
        out.records
            .push(cx.info(format!("admissible[{tag}]"), r.admissible).on(&grid));
        out.records
            .push(cx.info(format!("ceiling[{tag}]"), r.ceiling).on(&grid));
        let mut t = Table::new(format!("para_offdiag_{tag}"), &["t", "log_distance_ratio", "log_norm"]);
        for p in &r.fit.points {
            t.push(vec![p.t, p.x, p.norm.ln()]);
        }
        out.tables.push(t);
    }
    Ok(out)
}

/// `L^{s/2m} Π(f, g)` against the shifted paraproduct, and stability of
/// `‖L^{s/2m} Π(f, g)‖₂ / (‖f‖_∞ ‖L^{s/2m} g‖₂)` under grid refinement.
pub(super) fn leibniz(cx: &Ctx) -> Result<SuiteOutput> {
    let op = match cx.custom()? {
        Some(op) => op,
        None => ring(cx.n(256, 32))?,
    };
    let calc = SpectralCalculus::new(&op)?;
    let psi = cx.psi(exp_monomial(1.0)?);
    let pt = cx.psi_tilde(exp_monomial(2.0)?);
    let tgrid = cx.grid_or(|| TGrid::covering(&op, 1e-6, 1e4, 8))?;
    let spec = ParaproductSpec::normalized(&op, psi.clone(), pt.clone(), tgrid)?;
    let fine = ParaproductSpec::normalized(&op, psi, pt, tgrid.refine())?;
    let trials = cx.trials(5, 2);
    let n = op.len();
    let fs = bounded_probes(n, trials, cx.seed());
    let gs = gaussian_probes(n, trials, cx.seed().wrapping_add(1));
    let ss = [0.5, 1.0, 1.5];
    let cells: Vec<(f64, usize)> = ss.iter().flat_map(|&s| (0..trials).map(move |j| (s, j))).collect();
    let reps = cells
        .par_iter()
        .map(|&(s, j)| {
            let (f, g) = (col(&fs, j), col(&gs, j));
            Ok((
                leibniz_check(&calc, &spec, s, &f, &g)?,
                leibniz_check(&calc, &fine, s, &f, &g)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = format!("{} points; {}", n, describe_grid(&tgrid));
    let mut out = SuiteOutput::default();
    let mut table = Table::new(
        "leibniz",
        &["s", "trial", "residual", "norm_ratio", "norm_ratio_refined"],
    );
    let mut residual = 0.0f64;
    let mut drift = 0.0f64;
    for ((s, j), (a, b)) in cells.iter().zip(&reps) {
        table.push(vec![*s, *j as f64, a.residual, a.norm_ratio, b.norm_ratio]);
        residual = residual.max(a.residual).max(b.residual);
        drift = drift.max((b.norm_ratio / a.norm_ratio - 1.0).abs());
    }
    out.records.push(
        cx.at_most("max_residual", residual, "leibniz_residual")
            .on(&grid)
            .flagged(&spec.warnings),
    );
    out.records
        .push(cx.at_most("norm_ratio_drift", drift, "leibniz_drift").on(&grid));
    out.tables.push(table);
    Ok(out)
}

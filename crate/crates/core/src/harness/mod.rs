//! Experiment harness: configs, suites, reports and refinement studies.

pub mod config;
pub mod report;
pub mod suites;

#[cfg(test)]
mod tests;

use std::str::FromStr;
use std::time::Instant;

pub use config::{ExperimentConfig, OutputConfig};
pub use report::{
    emit_plot_data, read_report, write_report, CheckRecord, Comparison, ExperimentReport, Manifest, ManifestEntry,
    Provenance, Table,
};
pub use suites::{Knobs, Suite, TOLERANCES};

use crate::error::{Error, Result};
use suites::Ctx;

/// Version of the report layout.
pub const REPORT_FORMAT: u32 = 1;

fn provenance(config: &ExperimentConfig) -> Provenance {
    Provenance {
        config_hash: config.hash(),
        seed: config.seed,
        quick: config.quick,
        version: env!("CARGO_PKG_VERSION").to_string(),
        format: REPORT_FORMAT,
    }
}

/// Runs the configured suite with its own plan.
pub fn run_suite(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_with_knobs(config, Knobs::default())
}

/// Runs the configured suite with refinement multipliers applied.
pub fn run_with_knobs(config: &ExperimentConfig, knobs: Knobs) -> Result<ExperimentReport> {
    config.validate()?;
    let suite = Suite::from_name(&config.suite)?;
    let start = Instant::now();
    let out = suite.run(&Ctx { config, knobs, suite })?;
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(budget) = config.budget_secs {
        if elapsed > budget {
            return Err(Error::TimeBudget { elapsed, budget });
        }
    }
    Ok(ExperimentReport {
        suite: suite.name().to_string(),
        provenance: provenance(config),
        records: out.records,
        tables: out.tables,
    })
}

/// Runs `f` on a dedicated pool of `threads` workers. Dense kernels run
/// sequentially inside it so that reductions never depend on the count.
pub fn run_in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    faer::set_global_parallelism(faer::Par::Seq);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Worker count from `PARALAB_THREADS`, else the available parallelism.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("PARALAB_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!(
                "PARALAB_THREADS = '{v}' is not a positive integer"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// What a refinement study doubles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// grid size
    N,
    /// nodes per unit of `ln t`
    Q,
    /// width of the scale window
    Trunc,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Axis> {
        match s {
            "N" | "n" => Ok(Axis::N),
            "q" | "Q" => Ok(Axis::Q),
            "trunc" => Ok(Axis::Trunc),
            _ => Err(Error::Config(format!("unknown axis '{s}'; use N, q or trunc"))),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::N => "N",
            Axis::Q => "q",
            Axis::Trunc => "trunc",
        }
    }

    fn knobs(self, factor: u32) -> Knobs {
        let mut k = Knobs::default();
        match self {
            Axis::N => k.n_factor = factor as usize,
            Axis::Q => k.q_factor = factor,
            Axis::Trunc => k.widen = factor as f64,
        }
        k
    }
}

/// Reruns a suite with the axis doubled `steps - 1` times.
///
/// Records are matched by position. The result holds the finest run's
/// checks, the last step change and observed order of every record, and the
/// tables `refine_values`, `refine_deltas` and `refine_orders`.
pub fn refinement_study(config: &ExperimentConfig, axis: Axis, steps: usize) -> Result<ExperimentReport> {
    if steps < 2 {
        return Err(Error::Config(format!(
            "a refinement study needs at least 2 steps, got {steps}"
        )));
    }
    if steps > 12 {
        return Err(Error::Config(format!(
            "{steps} steps would multiply the axis by 2^{}",
            steps - 1
        )));
    }
    let runs = (0..steps)
        .map(|i| run_with_knobs(config, axis.knobs(1 << i)))
        .collect::<Result<Vec<_>>>()?;
    let count = runs[0].records.len();
    if runs.iter().any(|r| r.records.len() != count) {
        return Err(Error::Config(
            "record layout changes along the axis; cannot match records".into(),
        ));
    }
    let mut values = Table::new("refine_values", &["step", "factor", "record", "value"]);
    let mut deltas = Table::new("refine_deltas", &["step", "record", "delta"]);
    let mut orders = Table::new("refine_orders", &["step", "record", "order"]);
    let series: Vec<Vec<f64>> = (0..count)
        .map(|j| runs.iter().map(|r| r.records[j].value).collect())
        .collect();
    for (i, _) in runs.iter().enumerate() {
        for (j, s) in series.iter().enumerate() {
            values.push(vec![i as f64, (1u64 << i) as f64, j as f64, s[i]]);
            if i >= 1 {
                deltas.push(vec![i as f64, j as f64, (s[i] - s[i - 1]).abs()]);
            }
            if i >= 2 {
                orders.push(vec![i as f64, j as f64, observed_order(s[i - 2], s[i - 1], s[i])]);
            }
        }
    }
    let finest = runs.last().expect("at least two runs");
    let mut records = finest.records.clone();
    for (rec, s) in finest.records.iter().zip(&series) {
        let k = s.len() - 1;
        let tag = |what: &str| format!("{what}[{}]", rec.name);
        let info = |name: String, v: f64| {
            CheckRecord::new(&rec.suite, name, v, f64::NAN, Comparison::Info, &rec.anchor).on(format!(
                "{} doubled {} times",
                axis.name(),
                steps - 1
            ))
        };
        records.push(info(tag("last_delta"), (s[k] - s[k - 1]).abs()));
        if k >= 2 {
            records.push(info(tag("observed_order"), observed_order(s[k - 2], s[k - 1], s[k])));
        }
    }
    Ok(ExperimentReport {
        suite: finest.suite.clone(),
        provenance: provenance(config),
        records,
        tables: vec![values, deltas, orders],
    })
}

/// `log₂(|v₁ − v₀| / |v₂ − v₁|)`; infinite once the differences vanish.
fn observed_order(v0: f64, v1: f64, v2: f64) -> f64 {
    let (a, b) = ((v1 - v0).abs(), (v2 - v1).abs());
    if b == 0.0 {
        f64::INFINITY
    } else {
        (a / b).log2()
    }
}

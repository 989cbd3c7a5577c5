//! The verification suites, one per acceptance criterion.

mod analysis;
mod calculus;
mod para;

use num_complex::Complex64 as C64;

use crate::calculus::{make_calculus, Calculus, Engine, PsiFunction};
use crate::error::{Error, Result};
pub(crate) use crate::linalg::col_vec as col;
use crate::linalg::{norm2, sub};
use crate::operator::{Boundary, CoefficientDescriptor, OperatorDescriptor, SectorialOperator};
use crate::space::{MetricMeasureSpace, SpaceDescriptor, Topology};
use crate::tent::TGrid;

use super::config::ExperimentConfig;
use super::report::{CheckRecord, Comparison, Table};

/// Pinned thresholds and the names under which a config may override them.
pub const TOLERANCES: &[(&str, f64)] = &[
    ("calculus_rel", 1e-8),
    ("quadratic_rel", 0.02),
    ("calderon_residual", 1e-3),
    ("calderon_widening", 0.999),
    ("calderon_q_gain", 2.0),
    ("pairing_residual", 1e-3),
    ("offdiag_gamma", 1.7),
    ("conservation", 1e-9),
    ("carleson_spread", 50.0),
    ("carleson_drift", 0.3),
    ("para_l2_band", 1.25),
    ("para_identity_budget", 1.0),
    ("para_identity_adjoint", 1e-2),
    ("para_offdiag_gap", 0.5),
    ("leibniz_residual", 1e-6),
    ("leibniz_drift", 0.1),
    ("tent_spread", 4.0),
    ("tent_growth", 1.05),
    ("molecule_drift", 0.3),
];

/// Named suites; the order is the order of the acceptance criteria.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Calculus,
    Quadratic,
    Calderon,
    Offdiag,
    Conservation,
    Carleson,
    ParaL2,
    ParaIdentity,
    ParaOffdiag,
    Leibniz,
    TentDuality,
    Molecules,
    Determinism,
}

impl Suite {
    pub const ALL: [Suite; 13] = [
        Suite::Calculus,
        Suite::Quadratic,
        Suite::Calderon,
        Suite::Offdiag,
        Suite::Conservation,
        Suite::Carleson,
        Suite::ParaL2,
        Suite::ParaIdentity,
        Suite::ParaOffdiag,
        Suite::Leibniz,
        Suite::TentDuality,
        Suite::Molecules,
        Suite::Determinism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Calculus => "calculus",
            Suite::Quadratic => "quadratic",
            Suite::Calderon => "calderon",
            Suite::Offdiag => "offdiag",
            Suite::Conservation => "conservation",
            Suite::Carleson => "carleson",
            Suite::ParaL2 => "para_l2",
            Suite::ParaIdentity => "para_identity",
            Suite::ParaOffdiag => "para_offdiag",
            Suite::Leibniz => "leibniz",
            Suite::TentDuality => "tent_duality",
            Suite::Molecules => "molecules",
            Suite::Determinism => "determinism",
        }
    }

    /// The statement each suite puts to the test.
    pub fn anchor(self) -> &'static str {
        match self {
            Suite::Calculus => "holomorphic functional calculus",
            Suite::Quadratic => "quadratic estimate",
            Suite::Calderon => "Calderon reproducing formula",
            Suite::Offdiag => "off-diagonal estimates for psi(t^2m L)",
            Suite::Conservation => "conservation property",
            Suite::Carleson => "Carleson measure characterization of BMO",
            Suite::ParaL2 => "paraproduct L2 boundedness",
            Suite::ParaIdentity => "paraproduct identity on constants",
            Suite::ParaOffdiag => "paraproduct off-diagonal decay",
            Suite::Leibniz => "fractional Leibniz rule for paraproducts",
            Suite::TentDuality => "tent space duality",
            Suite::Molecules => "molecular Hardy space control",
            Suite::Determinism => "plumbing",
        }
    }

    pub fn from_name(name: &str) -> Result<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name).ok_or_else(|| {
            let known: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
            Error::Config(format!("unknown suite '{name}'; known suites: {}", known.join(", ")))
        })
    }

    pub(crate) fn run(self, cx: &Ctx) -> Result<SuiteOutput> {
        match self {
            Suite::Calculus => calculus::calculus(cx),
            Suite::Quadratic => calculus::quadratic(cx),
            Suite::Calderon => calculus::calderon(cx),
            Suite::Offdiag => calculus::offdiag(cx),
            Suite::Conservation => calculus::conservation(cx),
            Suite::Carleson => analysis::carleson(cx),
            Suite::ParaL2 => para::para_l2(cx),
            Suite::ParaIdentity => para::para_identity(cx),
            Suite::ParaOffdiag => para::para_offdiag(cx),
            Suite::Leibniz => para::leibniz(cx),
            Suite::TentDuality => analysis::tent_duality(cx),
            Suite::Molecules => analysis::molecules(cx),
            Suite::Determinism => determinism(cx),
        }
    }
}

/// Multipliers a refinement study applies on top of a suite's plan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Knobs {
    pub n_factor: usize,
    pub q_factor: u32,
    pub widen: f64,
}

impl Default for Knobs {
    fn default() -> Knobs {
        Knobs {
            n_factor: 1,
            q_factor: 1,
            widen: 1.0,
        }
    }
}

#[derive(Default)]
pub(crate) struct SuiteOutput {
    pub records: Vec<CheckRecord>,
    pub tables: Vec<Table>,
}

/// What a suite sees: its config and the refinement multipliers.
pub(crate) struct Ctx<'a> {
    pub config: &'a ExperimentConfig,
    pub knobs: Knobs,
    pub suite: Suite,
}

impl Ctx<'_> {
    fn quick(&self) -> bool {
        self.config.quick
    }

    fn seed(&self) -> u64 {
        self.config.seed
    }

    fn pick<T>(&self, full: T, quick: T) -> T {
        if self.quick() {
            quick
        } else {
            full
        }
    }

    fn trials(&self, full: usize, quick: usize) -> usize {
        self.config.trials.unwrap_or(self.pick(full, quick))
    }

    fn n(&self, full: usize, quick: usize) -> usize {
        self.pick(full, quick) * self.knobs.n_factor
    }

    fn sizes(&self, full: &[usize], quick: &[usize]) -> Vec<usize> {
        let base = self
            .config
            .sizes
            .clone()
            .unwrap_or_else(|| self.pick(full, quick).to_vec());
        base.into_iter().map(|n| n * self.knobs.n_factor).collect()
    }

    fn q(&self, q: u32) -> u32 {
        q * self.knobs.q_factor
    }

    /// Applies the `q` and truncation multipliers to a grid.
    fn grid(&self, g: TGrid) -> TGrid {
        TGrid {
            q: self.q(g.q),
            ..g.widen(self.knobs.widen)
        }
    }

    /// The configured grid if any, else `default`; multipliers applied.
    fn grid_or(&self, default: impl FnOnce() -> Result<TGrid>) -> Result<TGrid> {
        Ok(self.grid(match self.config.tgrid {
            Some(g) => g,
            None => default()?,
        }))
    }

    fn psi(&self, default: PsiFunction) -> PsiFunction {
        self.config.psi.clone().unwrap_or(default)
    }

    fn psi_tilde(&self, default: PsiFunction) -> PsiFunction {
        self.config.psi_tilde.clone().unwrap_or(default)
    }

    /// The configured operator; `N` refinement cannot rescale it.
    fn custom(&self) -> Result<Option<SectorialOperator>> {
        let op = self.config.custom_operator()?;
        if op.is_some() && self.knobs.n_factor != 1 {
            return Err(Error::Config(
                "N refinement needs the built-in grids; drop the configured operator".into(),
            ));
        }
        Ok(op)
    }

    fn tol(&self, key: &str) -> f64 {
        if let Some(v) = self.config.tolerances.get(key) {
            return *v;
        }
        TOLERANCES
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .expect("tolerance key is registered")
    }

    fn at_most(&self, name: impl Into<String>, value: f64, key: &str) -> CheckRecord {
        CheckRecord::new(
            self.suite.name(),
            name,
            value,
            self.tol(key),
            Comparison::AtMost,
            self.suite.anchor(),
        )
    }

    fn at_least(&self, name: impl Into<String>, value: f64, key: &str) -> CheckRecord {
        CheckRecord::new(
            self.suite.name(),
            name,
            value,
            self.tol(key),
            Comparison::AtLeast,
            self.suite.anchor(),
        )
    }

    fn info(&self, name: impl Into<String>, value: f64) -> CheckRecord {
        CheckRecord::new(
            self.suite.name(),
            name,
            value,
            f64::NAN,
            Comparison::Info,
            self.suite.anchor(),
        )
    }
}

/// Coefficients of the built-in grid operators.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Coeffs {
    Unit,
    /// `Re a ~ U[1/2, 2]`, `|arg a| ≤ angle`
    Random {
        angle: f64,
        seed: u64,
    },
}

/// Divergence-form operator on a unit-spacing grid.
pub(crate) fn grid_operator(dims: &[usize], topology: Topology, coeffs: Coeffs) -> Result<SectorialOperator> {
    let coefficients = match coeffs {
        Coeffs::Unit => CoefficientDescriptor::Constant { re: 1.0, im: 0.0 },
        Coeffs::Random { angle, seed } => CoefficientDescriptor::Random {
            delta: 0.5,
            lambda: 2.0,
            max_angle: angle,
            seed,
        },
    };
    SectorialOperator::from_descriptor(&OperatorDescriptor::DivergenceForm {
        space: SpaceDescriptor::Grid {
            dims: dims.to_vec(),
            spacing: 1.0,
            topology,
            base_point: 0,
        },
        coefficients,
        boundary: match topology {
            Topology::Periodic => Boundary::Periodic,
            Topology::Bounded => Boundary::Dirichlet,
        },
        power: 1,
        scale: 1.0,
    })
}

pub(crate) fn ring(n: usize) -> Result<SectorialOperator> {
    grid_operator(&[n], Topology::Periodic, Coeffs::Unit)
}

/// The unit-coefficient Laplacian on a grid space.
pub fn laplacian_on(space: &MetricMeasureSpace) -> Result<SectorialOperator> {
    let (dims, topo) = match (space.dims(), space.topology()) {
        (Some(d), Some(t)) => (d.to_vec(), t),
        _ => {
            return Err(Error::Config(
                "a bare space must be a grid; give an operator for explicit spaces".into(),
            ))
        }
    };
    let spacing = space.min_spacing();
    let mut op = grid_operator(&dims, topo, Coeffs::Unit)?;
    if spacing != 1.0 {
        op = SectorialOperator::from_descriptor(&OperatorDescriptor::DivergenceForm {
            space: space.descriptor(),
            coefficients: CoefficientDescriptor::Constant { re: 1.0, im: 0.0 },
            boundary: match topo {
                Topology::Periodic => Boundary::Periodic,
                Topology::Bounded => Boundary::Dirichlet,
            },
            power: 1,
            scale: 1.0,
        })?;
    }
    Ok(op)
}

/// Short description of a grid and its coefficients.
pub(crate) fn describe(dims: &[usize], topology: Topology, coeffs: Coeffs) -> String {
    let d: Vec<String> = dims.iter().map(|n| n.to_string()).collect();
    let t = match topology {
        Topology::Periodic => "periodic",
        Topology::Bounded => "dirichlet",
    };
    let c = match coeffs {
        Coeffs::Unit => String::new(),
        Coeffs::Random { angle: 0.0, .. } => ", random real coefficients".into(),
        Coeffs::Random { angle, .. } => format!(", random complex coefficients (angle {angle})"),
    };
    format!("{t} {}{c}", d.join("x"))
}

pub(crate) fn describe_grid(g: &TGrid) -> String {
    format!("t in [{:.3e}, {:.3e}], q = {}", g.delta, g.r, g.q)
}

/// Spectral engine when the dense budget allows, contour otherwise.
pub(crate) fn engine_for(op: &SectorialOperator) -> Result<Box<dyn Calculus>> {
    match make_calculus(op, Engine::Spectral) {
        Err(Error::DenseBudget { .. }) => make_calculus(op, Engine::Contour),
        other => other,
    }
}

pub(crate) fn rel_err(w: &[f64], a: &[C64], b: &[C64]) -> f64 {
    let nb = norm2(w, b);
    norm2(w, &sub(a, b)) / if nb > 0.0 { nb } else { 1.0 }
}

pub(crate) fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Every other suite in reduced form, rerun on one and four threads.
fn determinism(cx: &Ctx) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let mut table = Table::new("determinism", &["suite", "identical_rerun", "identical_threads"]);
    for (i, s) in Suite::ALL.into_iter().filter(|s| *s != Suite::Determinism).enumerate() {
        let cfg = ExperimentConfig::new(s.name()).quick().with_seed(cx.seed());
        let run = |threads| super::run_in_pool(threads, || super::run_suite(&cfg).map(|r| r.fingerprint()));
        let a = run(1)??;
        let b = run(1)??;
        let c = run(4)??;
        let (rerun, threads) = ((a == b) as u8 as f64, (a == c) as u8 as f64);
        table.push(vec![i as f64, rerun, threads]);
        let rec = CheckRecord::new(
            cx.suite.name(),
            format!("identical_{}", s.name()),
            rerun.min(threads),
            1.0,
            Comparison::AtLeast,
            "plumbing",
        )
        .on("quick plan, threads 1 and 4");
        out.records.push(rec);
    }
    out.tables.push(table);
    Ok(out)
}

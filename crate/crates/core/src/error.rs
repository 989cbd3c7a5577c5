use num_complex::Complex64;

/// Errors raised by the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("node budget exceeded: {requested} points requested, budget is {budget}")]
    NodeBudget { requested: usize, budget: usize },
    #[error("dense budget exceeded: dimension {n} > {budget}")]
    DenseBudget { n: usize, budget: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("ellipticity violated on edge {edge}: Re(a) = {re}")]
    Ellipticity { edge: usize, re: f64 },
    #[error(
        "resolvent solve failed at zeta = {zeta}: relative residual {residual:.3e}, \
         distance to spectrum about {distance:.3e}"
    )]
    ResolventFailure {
        zeta: Complex64,
        residual: f64,
        distance: f64,
    },
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),
    #[error("unsupported path: {0}")]
    Unsupported(String),
    #[error("pairing integral vanishes ({0:.3e})")]
    VanishingPairing(f64),
    #[error("witness mismatch: |m - L^M b| / |m| = {0:.3e}")]
    WitnessMismatch(f64),
    #[error("zero candidate")]
    ZeroCandidate,
    #[error("empty molecule set")]
    EmptyMolecules,
    #[error("time budget exceeded: {elapsed:.1} s > {budget:.1} s")]
    TimeBudget { elapsed: f64, budget: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

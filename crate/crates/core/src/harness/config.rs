//! Experiment configuration read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calculus::PsiFunction;
use crate::error::{Error, Result};
use crate::operator::{OperatorDescriptor, SectorialOperator};
use crate::space::{MetricMeasureSpace, SpaceDescriptor};
use crate::tent::TGrid;

use super::suites::{Suite, TOLERANCES};

/// Where reports and tables go.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// One experiment: a suite and the knobs it reads.
///
/// Every field but `suite` is optional. Suites fall back to their built-in
/// plans; `space`, `operator`, `psi`, `psi_tilde` and `tgrid` replace the
/// defaults of suites that run on a single operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: String,
    #[serde(default)]
    pub seed: u64,
    /// Reduced sizes for smoke runs and determinism checks.
    #[serde(default)]
    pub quick: bool,
    #[serde(default)]
    pub trials: Option<usize>,
    /// Grid sizes for suites that sweep `N`.
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub space: Option<SpaceDescriptor>,
    #[serde(default)]
    pub operator: Option<OperatorDescriptor>,
    #[serde(default)]
    pub psi: Option<PsiFunction>,
    #[serde(default)]
    pub psi_tilde: Option<PsiFunction>,
    #[serde(default)]
    pub tgrid: Option<TGrid>,
    /// Overrides of the pinned thresholds, by name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    /// Wall-clock budget in seconds; exceeding it is an error.
    #[serde(default)]
    pub budget_secs: Option<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn new(suite: &str) -> ExperimentConfig {
        ExperimentConfig {
            suite: suite.to_string(),
            seed: 0,
            quick: false,
            trials: None,
            sizes: None,
            space: None,
            operator: None,
            psi: None,
            psi_tilde: None,
            tgrid: None,
            tolerances: BTreeMap::new(),
            budget_secs: None,
            output: OutputConfig::default(),
        }
    }

    pub fn quick(mut self) -> ExperimentConfig {
        self.quick = true;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> ExperimentConfig {
        self.seed = seed;
        self
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        Suite::from_name(&self.suite)?;
        if let Some(k) = self.tolerances.keys().find(|k| !TOLERANCES.iter().any(|(t, _)| t == k)) {
            return Err(Error::Config(format!("unknown tolerance '{k}'")));
        }
        if let Some((k, v)) = self.tolerances.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Config(format!("tolerance '{k}' = {v} must be positive")));
        }
        if let Some(s) = &self.sizes {
            if s.is_empty() || s.iter().any(|&n| n < 8) {
                return Err(Error::Config("sizes must be non-empty and at least 8".into()));
            }
        }
        if self.trials == Some(0) {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.space.is_some() && self.operator.is_some() {
            return Err(Error::Config("give either a space or an operator, not both".into()));
        }
        if let Some(b) = self.budget_secs {
            if !(b > 0.0) {
                return Err(Error::Config(format!("budget_secs = {b} must be positive")));
            }
        }
        Ok(())
    }

    /// Hex sha256 of the canonical JSON form; output paths are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let text = serde_json::to_string(&c).unwrap_or_default();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// The configured operator, if any: an explicit operator, or the
    /// standard Laplacian on the configured space.
    pub fn custom_operator(&self) -> Result<Option<SectorialOperator>> {
        if let Some(d) = &self.operator {
            return SectorialOperator::from_descriptor(d).map(Some);
        }
        if let Some(d) = &self.space {
            let space = MetricMeasureSpace::from_descriptor(d)?;
            return super::suites::laplacian_on(&space).map(Some);
        }
        Ok(None)
    }
}

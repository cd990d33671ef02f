//! Config files. Each subcommand reads one JSON object; unknown keys are
//! rejected and omitted keys take the defaults below. Relative paths are
//! resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use riskagg::cones::{Cone, FeasibleRegion};
use riskagg::distributions::Family;
use riskagg::saa::{SaaConfig, SaaMode};
use riskagg::synthetic::FactorModel;

use crate::{CliError, CliResult};

pub struct RawConfig {
    value: serde_json::Value,
    pub sha256: String,
    pub base_dir: PathBuf,
}

impl RawConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let (value, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                let value: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (value, dir)
            }
            None => (serde_json::Value::Object(Default::default()), PathBuf::new()),
        };
        if !value.is_object() {
            return Err(CliError::Config("config must be a JSON object".into()));
        }
        // keys are sorted, so the hash ignores formatting and key order
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        let sha256 = Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(RawConfig { value, sha256, base_dir })
    }

    pub fn parse<T: DeserializeOwned + Resolve>(&self) -> CliResult<T> {
        let mut cfg: T = serde_json::from_value(self.value.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.resolve(&self.base_dir);
        Ok(cfg)
    }
}

/// Rewrites relative paths against the config directory.
pub trait Resolve {
    fn resolve(&mut self, _base: &Path) {}
}

fn resolve_path(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Where asset returns come from. Every experiment picks `d` of the source's
/// assets per trial and fits an elliptical distribution to them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceConfig {
    /// Monthly returns CSV; the fitted distribution is the true one.
    Returns {
        path: PathBuf,
        #[serde(default = "normal")]
        fit: Family,
    },
    /// Factor-model returns generated from the master seed.
    Synthetic {
        #[serde(default)]
        model: FactorModel,
        #[serde(default = "normal")]
        fit: Family,
    },
    /// Scenario file treated as an empirical distribution; `fit` only
    /// defines the surrogate risk region.
    Scenarios {
        path: PathBuf,
        #[serde(default = "student_t4")]
        fit: Family,
    },
    /// Explicit elliptical distribution.
    Elliptical {
        family: Family,
        mu: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Synthetic {
            model: FactorModel::default(),
            fit: Family::Normal,
        }
    }
}

impl SourceConfig {
    fn resolve(&mut self, base: &Path) {
        match self {
            SourceConfig::Returns { path, .. } | SourceConfig::Scenarios { path, .. } => resolve_path(path, base),
            _ => {}
        }
    }
}

fn normal() -> Family {
    Family::Normal
}

fn student_t4() -> Family {
    Family::StudentT { nu: 4.0 }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbTableConfig {
    pub source: SourceConfig,
    pub dims: Vec<usize>,
    pub betas: Vec<f64>,
    /// Per-asset upper bounds `x_i <= q`; 1 means no quota.
    pub quotas: Vec<f64>,
    pub trials: usize,
    /// Monte Carlo draws per cell.
    pub samples: usize,
}

impl Default for ProbTableConfig {
    fn default() -> Self {
        ProbTableConfig {
            source: SourceConfig::default(),
            dims: vec![2, 5, 10],
            betas: vec![0.95, 0.99],
            quotas: vec![1.0, 0.75, 0.5],
            trials: 5,
            samples: 2000,
        }
    }
}

impl Resolve for ProbTableConfig {
    fn resolve(&mut self, base: &Path) {
        self.source.resolve(base);
    }
}

/// How basic sampling's set size is matched to aggregation sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Matching {
    /// `N_R + 1`, the size of the aggregated set.
    RiskCount,
    /// The realized effective sample size `N(n)`.
    Effective,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub source: SourceConfig,
    pub dims: Vec<usize>,
    pub beta: f64,
    pub trials: usize,
    /// Scenario sets per method and trial.
    pub sets: usize,
    /// Risk scenarios targeted by aggregation sampling.
    pub n_risk: usize,
    pub matching: Matching,
    /// Target return; defaults to the mean of the asset means.
    pub tau: Option<f64>,
    /// Reference sample size for non-elliptical sources.
    pub reference_size: usize,
    /// Treat every point as a risk scenario (nothing is aggregated).
    pub whole_space: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            source: SourceConfig::default(),
            dims: vec![10],
            beta: 0.95,
            trials: 1,
            sets: 50,
            n_risk: 100,
            matching: Matching::RiskCount,
            tau: None,
            reference_size: 200_000,
            whole_space: false,
        }
    }
}

impl Resolve for StabilityConfig {
    fn resolve(&mut self, base: &Path) {
        self.source.resolve(base);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionErrorConfig {
    pub source: SourceConfig,
    pub dims: Vec<usize>,
    pub sizes: Vec<usize>,
    pub betas: Vec<f64>,
    pub sets: usize,
    pub trials: usize,
    pub tau: Option<f64>,
}

impl Default for ReductionErrorConfig {
    fn default() -> Self {
        ReductionErrorConfig {
            source: SourceConfig::default(),
            dims: vec![5],
            sizes: vec![100, 200, 500],
            betas: vec![0.95, 0.99],
            sets: 30,
            trials: 1,
            tau: None,
        }
    }
}

impl Resolve for ReductionErrorConfig {
    fn resolve(&mut self, base: &Path) {
        self.source.resolve(base);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseStudyConfig {
    pub source: SourceConfig,
    pub d: usize,
    pub max_assets: usize,
    /// Upper bound `u` on every weight.
    pub cap: f64,
    pub beta: f64,
    pub tau: Option<f64>,
    pub modes: Vec<SaaMode>,
    /// SAA settings; `mode` is ignored in favour of `modes`.
    pub saa: SaaConfig,
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        CaseStudyConfig {
            source: SourceConfig::default(),
            d: 12,
            max_assets: 4,
            cap: 1.0,
            beta: 0.99,
            tau: None,
            modes: vec![SaaMode::BasicSampling, SaaMode::Aggregation, SaaMode::AggregationGhost],
            saa: SaaConfig { max_iterations: 4, ..SaaConfig::default() },
        }
    }
}

impl Resolve for CaseStudyConfig {
    fn resolve(&mut self, base: &Path) {
        self.source.resolve(base);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub cone: Cone,
    pub points: Vec<Vec<f64>>,
}

impl Resolve for ProjectConfig {}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub family: Family,
    pub mu: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Defaults to the long-only budget simplex.
    #[serde(default)]
    pub region: Option<FeasibleRegion>,
    pub beta: f64,
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    /// Scenario file with further points.
    #[serde(default)]
    pub points_file: Option<PathBuf>,
}

impl Resolve for ClassifyConfig {
    fn resolve(&mut self, base: &Path) {
        if let Some(p) = &mut self.points_file {
            resolve_path(p, base);
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthReturns {
    pub model: FactorModel,
    pub file: String,
}

impl Default for SynthReturns {
    fn default() -> Self {
        SynthReturns {
            model: FactorModel::default(),
            file: "returns.csv".into(),
        }
    }
}

/// Skewed heavy-tailed scenarios around a normal fit of the first `d`
/// assets of the generated returns.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthScenarios {
    pub d: usize,
    pub n: usize,
    pub delta: f64,
    pub nu: f64,
    pub file: String,
}

impl Default for SynthScenarios {
    fn default() -> Self {
        SynthScenarios {
            d: 12,
            n: 50_000,
            delta: -0.8,
            nu: 5.0,
            file: "scenarios.csv".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthDataConfig {
    pub returns: Option<SynthReturns>,
    pub scenarios: Option<SynthScenarios>,
}

impl Default for SynthDataConfig {
    fn default() -> Self {
        SynthDataConfig {
            returns: Some(SynthReturns::default()),
            scenarios: Some(SynthScenarios::default()),
        }
    }
}

impl Resolve for SynthDataConfig {}

pub(crate) fn check_beta(beta: f64) -> CliResult<()> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(CliError::Config(format!("beta must lie in (0.5, 1), got {beta}")));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &str, v: usize) -> CliResult<()> {
    if v == 0 {
        return Err(CliError::Config(format!("{name} must be positive")));
    }
    Ok(())
}

//! Loading a data source and drawing per-trial asset subsets from it.

use nalgebra::DMatrix;
use rand::seq::index;

use riskagg::distributions::{
    fit_from_returns, fit_from_scenarios, EllipticalDistribution, EmpiricalSampler, Family, ReturnsTable,
    ScenarioSampler, ScenarioSet,
};
use riskagg::rng::{derive_seed, rng_from_seed};
use riskagg::synthetic::factor_model_returns;

use crate::config::SourceConfig;
use crate::{CliError, CliResult};

pub(crate) const STREAM_DATA: u64 = 100;
const STREAM_SUBSET: u64 = 101;

pub enum Universe {
    Returns(ReturnsTable, Family),
    Scenarios(ScenarioSet, Family),
    Elliptical(EllipticalDistribution),
}

/// One trial's assets with the distributions built from them.
pub struct Instance {
    pub assets: Vec<usize>,
    pub labels: Vec<String>,
    /// Fitted elliptical distribution; the true distribution unless
    /// `empirical` is set, in which case it only shapes the risk region.
    pub surrogate: EllipticalDistribution,
    pub empirical: Option<EmpiricalSampler>,
}

impl Instance {
    pub fn sampler(&self) -> &dyn ScenarioSampler {
        match &self.empirical {
            Some(e) => e,
            None => &self.surrogate,
        }
    }

    pub fn dim(&self) -> usize {
        self.assets.len()
    }

    pub fn asset_list(&self) -> String {
        self.labels.join(";")
    }
}

impl Universe {
    pub fn load(cfg: &SourceConfig, seed: u64) -> CliResult<Self> {
        Ok(match cfg {
            SourceConfig::Returns { path, fit } => Universe::Returns(ReturnsTable::load(path)?, *fit),
            SourceConfig::Synthetic { model, fit } => {
                Universe::Returns(factor_model_returns(model, derive_seed(seed, &[STREAM_DATA]))?, *fit)
            }
            SourceConfig::Scenarios { path, fit } => Universe::Scenarios(ScenarioSet::load(path)?, *fit),
            SourceConfig::Elliptical { family, mu, covariance } => {
                Universe::Elliptical(elliptical_from_covariance(*family, mu.clone(), covariance)?)
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Universe::Returns(t, _) => t.dim(),
            Universe::Scenarios(s, _) => s.dim(),
            Universe::Elliptical(e) => e.dim(),
        }
    }

    fn label(&self, i: usize) -> String {
        match self {
            Universe::Returns(t, _) => t.tickers[i].clone(),
            Universe::Scenarios(s, _) => s.labels.as_ref().and_then(|l| l.get(i).cloned()).unwrap_or_else(|| format!("y{i}")),
            Universe::Elliptical(_) => format!("y{i}"),
        }
    }

    /// `d` assets chosen by the master seed; all assets when `d` equals the
    /// source dimension.
    pub fn instance(&self, d: usize, trial: usize, seed: u64) -> CliResult<Instance> {
        let total = self.dim();
        if d == 0 || d > total {
            return Err(CliError::Config(format!("dimension {d} not available from a source with {total} assets")));
        }
        let assets: Vec<usize> = if d == total {
            (0..d).collect()
        } else {
            let mut rng = rng_from_seed(derive_seed(seed, &[STREAM_SUBSET, d as u64, trial as u64]));
            let mut v = index::sample(&mut rng, total, d).into_vec();
            v.sort_unstable();
            v
        };
        let labels = assets.iter().map(|&i| self.label(i)).collect();
        let (surrogate, empirical) = match self {
            Universe::Returns(t, fam) => (fit_from_returns(&t.columns(&assets)?, *fam)?, None),
            Universe::Scenarios(s, fam) => {
                let sub = s.columns(&assets)?;
                (fit_from_scenarios(&sub, *fam)?, Some(EmpiricalSampler::new(sub)?))
            }
            Universe::Elliptical(e) => {
                let sigma = e.covariance().select_rows(&assets).select_columns(&assets);
                let mu = assets.iter().map(|&i| e.mu()[i]).collect();
                // covariance() includes the family's variance scale
                let sigma = sigma / e.family().variance_scale();
                (EllipticalDistribution::new(e.family(), mu, factor_of(&sigma)?)?, None)
            }
        };
        Ok(Instance { assets, labels, surrogate, empirical })
    }
}

/// Distribution with covariance `cov` (not the scatter matrix).
pub(crate) fn elliptical_from_covariance(
    family: Family,
    mu: Vec<f64>,
    cov: &[Vec<f64>],
) -> CliResult<EllipticalDistribution> {
    let d = mu.len();
    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(CliError::Config(format!("covariance must be {d} x {d}")));
    }
    let sigma = DMatrix::from_fn(d, d, |i, j| cov[i][j]) / family.variance_scale();
    Ok(EllipticalDistribution::new(family, mu, factor_of(&sigma)?)?)
}

/// Upper-triangular `P` with `P'P = sigma`.
pub(crate) fn factor_of(sigma: &DMatrix<f64>) -> CliResult<DMatrix<f64>> {
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| CliError::Config("covariance matrix is not positive definite".into()))?;
    Ok(chol.l().transpose())
}

use serde::{Deserialize, Serialize};

use crate::cones::{FeasibleRegion, LinearRow};
use crate::error::{invalid, Error, Result};

/// Which problem form is optimized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum Objective {
    /// Minimize CVaR subject to `mu'x >= tau`.
    P1 { tau: f64 },
    /// Minimize `lambda * CVaR - (1 - lambda) * mu'x`.
    P3 { lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cardinality {
    /// At most this many assets held.
    pub max_assets: usize,
    /// Per-asset cap `u_i`, used in `x_i <= u_i z_i`.
    pub cap: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PortfolioProblem {
    pub region: FeasibleRegion,
    pub objective: Objective,
    pub beta: f64,
    /// Mean of the input distribution, not of any scenario set.
    pub mu: Vec<f64>,
    pub cardinality: Option<Cardinality>,
}

impl PortfolioProblem {
    /// P1 with target `tau`, defaulting to the mean of the entries of `mu`.
    pub fn min_cvar(region: FeasibleRegion, mu: Vec<f64>, beta: f64, tau: Option<f64>) -> Result<Self> {
        let tau = tau.unwrap_or_else(|| mu.iter().sum::<f64>() / mu.len().max(1) as f64);
        let p = Self::build(region, mu, beta, Objective::P1 { tau })?;
        if !tau.is_finite() {
            return invalid("target return must be finite");
        }
        // probe the return constraint against the region
        p.region_with_return().map_err(|e| match e {
            Error::Infeasible(_) => Error::Infeasible(format!("no feasible portfolio reaches return {tau}")),
            other => other,
        })?;
        Ok(p)
    }

    pub fn tradeoff(region: FeasibleRegion, mu: Vec<f64>, beta: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return invalid(format!("lambda must lie in [0, 1], got {lambda}"));
        }
        Self::build(region, mu, beta, Objective::P3 { lambda })
    }

    fn build(region: FeasibleRegion, mu: Vec<f64>, beta: f64, objective: Objective) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return invalid(format!("beta must lie in (0, 1), got {beta}"));
        }
        if mu.len() != region.dim() {
            return invalid("mean vector and region dimensions differ");
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return invalid("mean vector must be finite");
        }
        Ok(PortfolioProblem {
            region,
            objective,
            beta,
            mu,
            cardinality: None,
        })
    }

    /// Adds `x_i <= cap z_i`, `sum z_i <= max_assets` with binary `z`.
    pub fn with_cardinality(mut self, max_assets: usize, cap: f64) -> Result<Self> {
        let d = self.dim();
        if max_assets == 0 {
            return invalid("cardinality limit must be positive");
        }
        if !(cap > 0.0) {
            return invalid("per-asset cap must be positive");
        }
        let caps: Vec<f64> = self.region.upper().iter().map(|u| u.min(cap)).collect();
        let mut sorted = caps.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let reach: f64 = sorted.iter().take(max_assets.min(d)).sum();
        if reach < self.region.capital() * (1.0 - 1e-12) {
            return Err(Error::Infeasible(format!(
                "{max_assets} assets capped at {cap} cannot hold capital {}",
                self.region.capital()
            )));
        }
        self.cardinality = Some(Cardinality { max_assets, cap: caps });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    /// Weight on CVaR in the objective.
    pub fn lambda(&self) -> f64 {
        match self.objective {
            Objective::P1 { .. } => 1.0,
            Objective::P3 { lambda } => lambda,
        }
    }

    /// `lambda * cvar - (1 - lambda) * mu'x`.
    pub fn objective_value(&self, cvar: f64, x: &[f64]) -> f64 {
        let lam = self.lambda();
        let ret = self.expected_return(x);
        if lam == 1.0 {
            cvar
        } else {
            lam * cvar - (1.0 - lam) * ret
        }
    }

    pub fn expected_return(&self, x: &[f64]) -> f64 {
        self.mu.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Feasible set with the P1 return row attached.
    pub fn region_with_return(&self) -> Result<FeasibleRegion> {
        match self.objective {
            Objective::P1 { tau } => self.region.with_row(LinearRow {
                coeffs: self.mu.iter().map(|m| -m).collect(),
                rhs: -tau,
            }),
            Objective::P3 { .. } => Ok(self.region.clone()),
        }
    }

    /// Same problem over a modified feasible set.
    pub fn with_region(&self, region: FeasibleRegion) -> Result<Self> {
        if region.dim() != self.dim() {
            return invalid("replacement region has a different dimension");
        }
        let mut p = self.clone();
        if let Some(c) = &mut p.cardinality {
            c.cap = c.cap.iter().zip(region.upper()).map(|(a, b)| a.min(*b)).collect();
        }
        p.region = region;
        Ok(p)
    }

    /// Checks `x` against the feasible set and, if configured, the
    /// cardinality limit.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        if !self.region_with_return().map(|r| r.contains(x, tol)).unwrap_or(false) {
            return false;
        }
        match &self.cardinality {
            Some(c) => x.iter().filter(|v| **v > tol).count() <= c.max_assets,
            None => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<u8>>,
    pub objective: f64,
    pub cvar: f64,
    pub var: f64,
    pub expected_return: f64,
    pub status: Status,
}

/// Serialized form of a solution together with its sampling context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<u8>>,
    pub objective: f64,
    pub cvar: f64,
    pub expected_return: f64,
    pub status: Status,
    pub seed: Option<u64>,
    pub scenario_count: usize,
}

impl Solution {
    pub fn record(&self, seed: Option<u64>, scenario_count: usize) -> SolutionRecord {
        SolutionRecord {
            x: self.x.clone(),
            z: self.z.clone(),
            objective: self.objective,
            cvar: self.cvar,
            expected_return: self.expected_return,
            status: self.status,
            seed,
            scenario_count,
        }
    }
}

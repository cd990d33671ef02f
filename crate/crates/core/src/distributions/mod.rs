//! Elliptical loss models, samplers, closed-form tail functions and
//! moment-based fitting.

pub mod returns;
pub mod scenarios;
pub mod special;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{rng_from_seed, Rng};

pub use returns::ReturnsTable;
pub use scenarios::{Provenance, ScenarioSet};

pub const DEFAULT_NU: f64 = 4.0;
const MAX_CONDITION: f64 = 1e12;
const RIDGE: f64 = 1e-10;

/// Spherical family of `X` in `Y = P'X + mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Normal,
    #[serde(rename = "t")]
    StudentT { nu: f64 },
}

impl Family {
    pub fn student_t(nu: f64) -> Result<Self> {
        if !(nu > 2.0) || !nu.is_finite() {
            return invalid(format!("degrees of freedom must exceed 2, got {nu}"));
        }
        Ok(Family::StudentT { nu })
    }

    fn check(&self) -> Result<()> {
        match *self {
            Family::Normal => Ok(()),
            Family::StudentT { nu } => Family::student_t(nu).map(|_| ()),
        }
    }

    /// Ratio of the covariance of `X` to the identity.
    pub fn variance_scale(&self) -> f64 {
        match *self {
            Family::Normal => 1.0,
            Family::StudentT { nu } => nu / (nu - 2.0),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return invalid(format!("beta must lie in (0, 1), got {beta}"));
    }
    Ok(())
}

/// `F^{-1}_{X_1}(beta)` for the first coordinate of the spherical vector.
pub fn spherical_quantile(family: Family, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    family.check()?;
    Ok(match family {
        Family::Normal => special::normal_quantile(beta),
        Family::StudentT { nu } => special::t_quantile(beta, nu),
    })
}

/// `(1/(1-beta)) * int_beta^1 F^{-1}_{X_1}(u) du`.
pub fn spherical_cvar(family: Family, beta: f64) -> Result<f64> {
    let q = spherical_quantile(family, beta)?;
    Ok(match family {
        Family::Normal => special::normal_pdf(q) / (1.0 - beta),
        Family::StudentT { nu } => {
            special::t_pdf(q, nu) * (nu + q * q) / ((1.0 - beta) * (nu - 1.0))
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossStats {
    pub var: f64,
    pub cvar: f64,
    pub mean_return: f64,
}

/// `Y = P'X + mu` with `X` spherical normal or Student-t.
#[derive(Clone, Debug)]
pub struct EllipticalDistribution {
    family: Family,
    mu: DVector<f64>,
    p: DMatrix<f64>,
    p_inv_t: DMatrix<f64>,
}

impl EllipticalDistribution {
    pub fn new(family: Family, mu: Vec<f64>, p: DMatrix<f64>) -> Result<Self> {
        family.check()?;
        let d = mu.len();
        if d == 0 || p.nrows() != d || p.ncols() != d {
            return invalid("factor must be square and match the location dimension");
        }
        if mu.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return invalid("distribution parameters must be finite");
        }
        let sv = p.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > 0.0) || smax / smin > MAX_CONDITION {
            return Err(Error::Singular(format!(
                "factor condition number {:.3e} exceeds {MAX_CONDITION:e}",
                smax / smin
            )));
        }
        let p_inv_t = p
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::Singular("factor is not invertible".into()))?;
        Ok(EllipticalDistribution {
            family,
            mu: DVector::from_vec(mu),
            p,
            p_inv_t,
        })
    }

    /// Zero location, identity factor.
    pub fn standard(family: Family, d: usize) -> Result<Self> {
        Self::new(family, vec![0.0; d], DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mu(&self) -> &[f64] {
        self.mu.as_slice()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Covariance of `Y`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.p.transpose() * &self.p * self.family.variance_scale()
    }

    /// Spherical coordinates `P^{-T}(y - mu)`.
    pub fn to_spherical(&self, y: &[f64]) -> Vec<f64> {
        let diff = DVector::from_iterator(self.dim(), y.iter().zip(self.mu.iter()).map(|(a, b)| a - b));
        (&self.p_inv_t * diff).iter().copied().collect()
    }

    /// `||Px||`.
    pub fn scale_of(&self, x: &[f64]) -> f64 {
        (&self.p * DVector::from_column_slice(x)).norm()
    }

    /// Exact VaR, CVaR and mean return of the loss `-x'Y`.
    pub fn loss_stats(&self, x: &[f64], beta: f64) -> Result<LossStats> {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return invalid("portfolio must be finite and match the distribution dimension");
        }
        let s = self.scale_of(x);
        let m: f64 = x.iter().zip(self.mu.iter()).map(|(a, b)| a * b).sum();
        Ok(LossStats {
            var: s * spherical_quantile(self.family, beta)? - m,
            cvar: s * spherical_cvar(self.family, beta)? - m,
            mean_return: m,
        })
    }

    /// Writes one draw into `out`.
    pub fn draw_into(&self, rng: &mut Rng, out: &mut [f64]) {
        let d = self.dim();
        let scale = match self.family {
            Family::Normal => 1.0,
            Family::StudentT { nu } => {
                let w: f64 = ChiSquared::new(nu).expect("validated nu").sample(rng);
                1.0 / (w / nu).sqrt()
            }
        };
        let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
        for (j, o) in out.iter_mut().enumerate() {
            // (P'z)_j = sum_k P_kj z_k
            let mut v = self.mu[j];
            for (k, zk) in z.iter().enumerate() {
                v += self.p[(k, j)] * zk;
            }
            *o = v;
        }
    }

    /// Equally weighted i.i.d. sample.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ScenarioSet> {
        if n == 0 {
            return invalid("sample size must be positive");
        }
        let mut rng = rng_from_seed(seed);
        let d = self.dim();
        let mut pts = vec![0.0; n * d];
        for row in pts.chunks_exact_mut(d) {
            self.draw_into(&mut rng, row);
        }
        Ok(ScenarioSet::uniform(d, pts)?.with_provenance(Provenance::Sampled, Some(seed)))
    }
}

/// Source of i.i.d. scenario draws.
pub trait ScenarioSampler: Sync {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut Rng, out: &mut [f64]);
}

impl ScenarioSampler for EllipticalDistribution {
    fn dim(&self) -> usize {
        EllipticalDistribution::dim(self)
    }

    fn draw(&self, rng: &mut Rng, out: &mut [f64]) {
        self.draw_into(rng, out)
    }
}

/// Weighted bootstrap from a fixed scenario set.
#[derive(Clone, Debug)]
pub struct EmpiricalSampler {
    set: ScenarioSet,
    cumulative: Vec<f64>,
}

impl EmpiricalSampler {
    pub fn new(set: ScenarioSet) -> Result<Self> {
        if set.is_empty() {
            return invalid("cannot sample from an empty scenario set");
        }
        let mut acc = 0.0;
        let cumulative = set
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(EmpiricalSampler { set, cumulative })
    }

    pub fn set(&self) -> &ScenarioSet {
        &self.set
    }
}

impl ScenarioSampler for EmpiricalSampler {
    fn dim(&self) -> usize {
        self.set.dim()
    }

    fn draw(&self, rng: &mut Rng, out: &mut [f64]) {
        let total = *self.cumulative.last().expect("nonempty");
        let u: f64 = rng.random::<f64>() * total;
        let i = self
            .cumulative
            .partition_point(|c| *c <= u)
            .min(self.cumulative.len() - 1);
        out.copy_from_slice(self.set.point(i));
    }
}

/// Draws `n` equally weighted scenarios from any sampler.
pub fn sample_from<S: ScenarioSampler + ?Sized>(sampler: &S, n: usize, seed: u64) -> Result<ScenarioSet> {
    if n == 0 {
        return invalid("sample size must be positive");
    }
    let d = sampler.dim();
    let mut rng = rng_from_seed(seed);
    let mut pts = vec![0.0; n * d];
    for row in pts.chunks_exact_mut(d) {
        sampler.draw(&mut rng, row);
    }
    Ok(ScenarioSet::uniform(d, pts)?.with_provenance(Provenance::Sampled, Some(seed)))
}

fn factor_from_covariance(family: Family, mu: Vec<f64>, mut cov: DMatrix<f64>) -> Result<EllipticalDistribution> {
    let d = mu.len();
    for j in 0..d {
        if !(cov[(j, j)] > 0.0) {
            return Err(Error::Singular(format!("column {j} has zero variance")));
        }
    }
    cov /= family.variance_scale();
    let chol = match cov.clone().cholesky() {
        Some(c) => c,
        None => {
            let ridged = &cov + DMatrix::identity(d, d) * RIDGE;
            ridged
                .cholesky()
                .ok_or_else(|| Error::Singular("sample covariance is not positive definite".into()))?
        }
    };
    // S = L L' = R'R with R = L' upper triangular
    EllipticalDistribution::new(family, mu, chol.l().transpose())
}

/// Moment fit: sample mean and `P` the upper Cholesky factor of the sample
/// covariance, rescaled by `(nu-2)/nu` for the t family.
pub fn fit_from_returns(table: &ReturnsTable, family: Family) -> Result<EllipticalDistribution> {
    family.check()?;
    let d = table.dim();
    let n = table.len();
    if n < d + 2 {
        return invalid(format!("need at least {} return rows for {d} assets, found {n}", d + 2));
    }
    let mut mu = vec![0.0; d];
    for r in &table.rows {
        for (m, v) in mu.iter_mut().zip(r) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::zeros(d, d);
    for r in &table.rows {
        let c = DVector::from_iterator(d, r.iter().zip(&mu).map(|(a, b)| a - b));
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    factor_from_covariance(family, mu, cov)
}

/// Moment fit from a weighted scenario set (reliability-weight covariance).
pub fn fit_from_scenarios(set: &ScenarioSet, family: Family) -> Result<EllipticalDistribution> {
    family.check()?;
    let d = set.dim();
    if set.len() < d + 2 {
        return invalid(format!("need at least {} scenarios for {d} assets", d + 2));
    }
    let mu = set.mean();
    let mut cov = DMatrix::zeros(d, d);
    let mut sq = 0.0;
    for (y, &p) in set.points().zip(set.probs()) {
        let c = DVector::from_iterator(d, y.iter().zip(&mu).map(|(a, b)| a - b));
        cov += (&c * c.transpose()) * p;
        sq += p * p;
    }
    if sq < 1.0 {
        cov /= 1.0 - sq;
    }
    factor_from_covariance(family, mu, cov)
}

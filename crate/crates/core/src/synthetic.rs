//! Synthetic inputs for tests and desk-scale experiments: factor-model
//! monthly returns and skewed heavy-tailed scenario files.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{Provenance, ReturnsTable, ScenarioSet};
use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorModel {
    pub assets: usize,
    pub months: usize,
    pub factors: usize,
    /// Degrees of freedom of the shocks; normal shocks when absent.
    pub shock_nu: Option<f64>,
}

impl Default for FactorModel {
    fn default() -> Self {
        FactorModel {
            assets: 20,
            months: 240,
            factors: 3,
            shock_nu: None,
        }
    }
}

/// Monthly returns `r_t = a + B f_t + e_t` with a market factor, a few
/// sector factors and idiosyncratic noise.
pub fn factor_model_returns(model: &FactorModel, seed: u64) -> Result<ReturnsTable> {
    let (d, t, k) = (model.assets, model.months, model.factors.max(1));
    if d == 0 || t == 0 {
        return invalid("factor model needs assets and months");
    }
    let mut rng = rng_from_seed(seed);
    let alpha: Vec<f64> = (0..d).map(|_| rng.random_range(0.002..0.014)).collect();
    let loadings = DMatrix::from_fn(d, k, |_, f| {
        if f == 0 {
            rng.random_range(0.6..1.4)
        } else {
            rng.random_range(-0.5..0.8)
        }
    });
    let factor_vol: Vec<f64> = (0..k).map(|f| if f == 0 { 0.045 } else { 0.02 }).collect();
    let idio: Vec<f64> = (0..d).map(|_| rng.random_range(0.03..0.08)).collect();
    let chi = model.shock_nu.map(|nu| (nu, ChiSquared::new(nu).expect("positive nu")));
    let shock = |rng: &mut crate::rng::Rng| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match &chi {
            Some((nu, c)) => z / (c.sample(rng) / nu).sqrt() * ((nu - 2.0) / nu).sqrt(),
            None => z,
        }
    };
    let mut rows = Vec::with_capacity(t);
    for _ in 0..t {
        let f: Vec<f64> = (0..k).map(|j| factor_vol[j] * shock(&mut rng)).collect();
        let row = (0..d)
            .map(|i| {
                let sys: f64 = (0..k).map(|j| loadings[(i, j)] * f[j]).sum();
                alpha[i] + sys + idio[i] * shock(&mut rng)
            })
            .collect();
        rows.push(row);
    }
    let tickers = (0..d).map(|i| format!("A{:03}", i + 1)).collect();
    ReturnsTable::new(tickers, rows)
}

/// Skewed Student-t style draws. Each draw is `mu + P'U` for independent
/// normals `U`, plus a shared half-normal shock `|U_0|` scaled by each
/// asset's volatility with weight `delta`, all divided by `sqrt(W/nu)`.
/// Negative `delta` fattens the joint loss tail.
pub fn skewed_scenarios(mu: &[f64], p: &DMatrix<f64>, delta: f64, nu: f64, n: usize, seed: u64) -> Result<ScenarioSet> {
    let d = mu.len();
    if p.nrows() != d || p.ncols() != d {
        return invalid("factor must be square and match the mean");
    }
    if !(delta > -1.0 && delta < 1.0) || !(nu > 2.0) || n == 0 {
        return invalid("need |delta| < 1, nu > 2 and n > 0");
    }
    let mut rng = rng_from_seed(seed);
    let chi = ChiSquared::new(nu).expect("nu > 2");
    let half_mean = (2.0 / std::f64::consts::PI).sqrt();
    let spread = (1.0 - delta * delta).sqrt();
    // unit variance for the mixed coordinate before the t scaling
    let unit = (1.0 - delta * delta * half_mean * half_mean).sqrt();
    let tscale = ((nu - 2.0) / nu).sqrt();
    let mut pts = vec![0.0; n * d];
    let mut x = vec![0.0; d];
    let vol: Vec<f64> = (0..d).map(|j| (0..d).map(|k| p[(k, j)].powi(2)).sum::<f64>().sqrt()).collect();
    for row in pts.chunks_exact_mut(d) {
        let u0: f64 = rng.sample::<f64, _>(StandardNormal).abs();
        let w = (chi.sample(&mut rng) / nu).sqrt();
        for xj in x.iter_mut() {
            *xj = rng.sample(StandardNormal);
        }
        let shock = delta * (u0 - half_mean);
        for j in 0..d {
            let core: f64 = (0..d).map(|k| p[(k, j)] * x[k]).sum();
            row[j] = mu[j] + (spread * core + shock * vol[j]) / unit / w * tscale;
        }
    }
    Ok(ScenarioSet::uniform(d, pts)?.with_provenance(Provenance::File, Some(seed)))
}

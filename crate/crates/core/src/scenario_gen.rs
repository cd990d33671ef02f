//! Aggregation sampling and aggregation reduction.

use serde::Serialize;

use crate::distributions::{Provenance, ScenarioSampler, ScenarioSet};
use crate::error::{invalid, Result};
use crate::risk_region::RiskRegion;
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggSampleReport {
    #[serde(skip)]
    pub scenario_set: ScenarioSet,
    pub n_risk: usize,
    pub n_nonrisk: usize,
    /// Raw draws consumed before the stopping rule, `n_risk + n_nonrisk`.
    pub effective_sample_size: usize,
    pub seed: u64,
}

/// Draws until `n_risk_target` risk scenarios are found, folding non-risk
/// draws into a running mean that becomes the last scenario. If no non-risk
/// point was seen, one fresh draw takes its place and all weights are equal.
pub fn aggregation_sampling<S: ScenarioSampler + ?Sized>(
    region: &RiskRegion,
    sampler: &S,
    n_risk_target: usize,
    seed: u64,
) -> Result<AggSampleReport> {
    if n_risk_target == 0 {
        return invalid("risk scenario target must be positive");
    }
    let d = sampler.dim();
    if d != region.dist().dim() {
        return invalid("sampler and risk region dimensions differ");
    }
    let mut rng = rng_from_seed(seed);
    let mut pts = Vec::with_capacity((n_risk_target + 1) * d);
    let mut n_risk = 0usize;
    let mut n_nonrisk = 0usize;
    let mut mean = vec![0.0; d];
    let mut y = vec![0.0; d];
    while n_risk < n_risk_target {
        sampler.draw(&mut rng, &mut y);
        if region.is_risk(&y)? {
            pts.extend_from_slice(&y);
            n_risk += 1;
        } else {
            let n = n_nonrisk as f64;
            for (m, v) in mean.iter_mut().zip(&y) {
                *m = (n * *m + v) / (n + 1.0);
            }
            n_nonrisk += 1;
        }
    }
    let total = (n_risk + n_nonrisk) as f64;
    let mut probs = vec![1.0 / total; n_risk];
    if n_nonrisk > 0 {
        pts.extend_from_slice(&mean);
        probs.push(n_nonrisk as f64 / total);
    } else {
        sampler.draw(&mut rng, &mut y);
        pts.extend_from_slice(&y);
        probs = vec![1.0 / (n_risk + 1) as f64; n_risk + 1];
    }
    let set = ScenarioSet::new(d, pts, probs)?.with_provenance(Provenance::Aggregated, Some(seed));
    Ok(AggSampleReport {
        scenario_set: set,
        n_risk,
        n_nonrisk,
        effective_sample_size: n_risk + n_nonrisk,
        seed,
    })
}

/// The first `count` raw draws of the stream used by [`aggregation_sampling`]
/// with the same seed.
pub fn raw_stream<S: ScenarioSampler + ?Sized>(sampler: &S, seed: u64, count: usize) -> Result<ScenarioSet> {
    if count == 0 {
        return invalid("raw stream length must be positive");
    }
    let d = sampler.dim();
    let mut rng = rng_from_seed(seed);
    let mut pts = vec![0.0; count * d];
    for row in pts.chunks_exact_mut(d) {
        sampler.draw(&mut rng, row);
    }
    Ok(ScenarioSet::uniform(d, pts)?.with_provenance(Provenance::Sampled, Some(seed)))
}

/// Classifies an existing set and collapses its non-risk scenarios.
pub fn aggregation_reduction(region: &RiskRegion, set: &ScenarioSet) -> Result<ScenarioSet> {
    region.aggregate(set)
}

/// `E N(n) = n / (1 - q)` for non-risk probability `q`.
pub fn expected_effective_sample_size(n: usize, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return invalid(format!("non-risk probability must lie in [0, 1), got {q}"));
    }
    Ok(n as f64 / (1.0 - q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::Cone;
    use crate::distributions::{EllipticalDistribution, Family};

    #[test]
    fn expected_size_formula() {
        assert_eq!(expected_effective_sample_size(100, 0.0).unwrap(), 100.0);
        assert_eq!(expected_effective_sample_size(100, 0.5).unwrap(), 200.0);
        assert!((expected_effective_sample_size(100, 0.9).unwrap() - 1000.0).abs() < 1e-9);
        assert!(expected_effective_sample_size(100, 1.0).is_err());
    }

    #[test]
    fn whole_space_region_returns_raw_draws() {
        let dist = EllipticalDistribution::standard(Family::Normal, 2).unwrap();
        let region = RiskRegion::with_threshold(dist.clone(), Cone::orthant(2), 0.95, 0.0).unwrap();
        let rep = aggregation_sampling(&region, &dist, 10, 5).unwrap();
        assert_eq!(rep.n_nonrisk, 0);
        let raw = raw_stream(&dist, 5, 11).unwrap();
        assert_eq!(rep.scenario_set.raw_points(), raw.raw_points());
        assert!(rep.scenario_set.probs().iter().all(|p| *p == 1.0 / 11.0));
    }

    #[test]
    fn weights_follow_counts() {
        let dist = EllipticalDistribution::standard(Family::Normal, 2).unwrap();
        let region = RiskRegion::new(dist.clone(), Cone::orthant(2), 0.95).unwrap();
        let rep = aggregation_sampling(&region, &dist, 20, 9).unwrap();
        let set = &rep.scenario_set;
        assert_eq!(set.len(), 21);
        let total = (rep.n_risk + rep.n_nonrisk) as f64;
        assert!(set.probs()[..20].iter().all(|p| *p == 1.0 / total));
        assert_eq!(set.probs()[20], rep.n_nonrisk as f64 / total);
        assert!((set.total_prob() - 1.0).abs() < 1e-12);
        assert_eq!(rep, aggregation_sampling(&region, &dist, 20, 9).unwrap());
    }
}

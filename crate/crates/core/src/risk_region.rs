//! Risk regions of elliptical distributions over a cone of portfolios.
//!
//! `y` is a risk scenario when some portfolio direction `x` in the cone `K`
//! has `-x'y >= ||Px|| q_beta - x'mu`. With `z = P^{-T}(y - mu)` and
//! `K' = PK` this is `||p_{K'}(-z)|| >= q_beta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{conic_hull, Cone, FeasibleRegion, Projector};
use crate::distributions::{
    spherical_quantile, EllipticalDistribution, Provenance, ScenarioSampler, ScenarioSet,
};
use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Scenarios with margin above `-TIE_TOL` count as risk.
pub const TIE_TOL: f64 = 1e-9;
const ARCHIVE_CAP: usize = 64;
const CHUNK: usize = 512;

#[derive(Clone, Debug)]
pub struct RiskRegion {
    dist: EllipticalDistribution,
    cone: Cone,
    image: Cone,
    projector: Projector,
    beta: f64,
    threshold: f64,
    monotone: bool,
}

/// Result of classifying a scenario set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub risk: Vec<usize>,
    pub nonrisk: Vec<usize>,
    /// Number of cone projections actually computed.
    pub projections: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonriskEstimate {
    pub prob: f64,
    pub std_error: f64,
    pub n: usize,
}

impl RiskRegion {
    /// Exact region at level `beta`, with `K` the cone of portfolio directions.
    pub fn new(dist: EllipticalDistribution, cone: Cone, beta: f64) -> Result<Self> {
        if !(beta > 0.5 && beta < 1.0) {
            return invalid(format!("risk level must lie in (0.5, 1), got {beta}"));
        }
        let q = spherical_quantile(dist.family(), beta)?;
        Self::with_threshold(dist, cone, beta, q)
    }

    /// Region with an arbitrary nonnegative threshold in place of `q_beta`.
    /// A threshold of zero makes every point a risk scenario; larger values
    /// give undersized approximate regions.
    pub fn with_threshold(dist: EllipticalDistribution, cone: Cone, beta: f64, threshold: f64) -> Result<Self> {
        if cone.dim() != dist.dim() {
            return invalid("cone and distribution dimensions differ");
        }
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return invalid(format!("threshold must be finite and nonnegative, got {threshold}"));
        }
        let image = cone.linear_image(dist.factor())?;
        let projector = image.projector();
        let monotone = cone.within_orthant();
        Ok(RiskRegion {
            dist,
            cone,
            image,
            projector,
            beta,
            threshold,
            monotone,
        })
    }

    /// Region for the conic hull of a feasible set.
    pub fn from_region(dist: EllipticalDistribution, region: &FeasibleRegion, beta: f64) -> Result<Self> {
        Self::new(dist, conic_hull(region)?, beta)
    }

    pub fn dist(&self) -> &EllipticalDistribution {
        &self.dist
    }

    pub fn cone(&self) -> &Cone {
        &self.cone
    }

    pub fn image_cone(&self) -> &Cone {
        &self.image
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn dominance_applies(&self) -> bool {
        self.monotone
    }

    /// `||p_{K'}(-P^{-T}(y - mu))|| - q`.
    pub fn risk_margin(&self, y: &[f64]) -> Result<f64> {
        let z = self.dist.to_spherical(y);
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        Ok(self.projector.projected_norm(&neg)? - self.threshold)
    }

    pub fn is_risk(&self, y: &[f64]) -> Result<bool> {
        Ok(self.risk_margin(y)? >= -TIE_TOL)
    }

    /// Pointwise classification; with `shortcut` and `K` inside the orthant,
    /// points dominated by archived decisions skip the projection.
    pub fn classify_batch(&self, set: &ScenarioSet, shortcut: bool) -> Result<Partition> {
        let n = set.len();
        let use_archive = shortcut && self.monotone;
        let chunks: Vec<(usize, usize)> = (0..n)
            .step_by(CHUNK)
            .map(|s| (s, (s + CHUNK).min(n)))
            .collect();
        let results: Vec<Result<(Vec<bool>, usize)>> = chunks
            .par_iter()
            .map(|&(s, e)| self.classify_range(set, s, e, use_archive))
            .collect();
        let mut part = Partition::default();
        for (&(s, _), r) in chunks.iter().zip(results) {
            let (flags, count) = r?;
            part.projections += count;
            for (k, f) in flags.into_iter().enumerate() {
                if f {
                    part.risk.push(s + k);
                } else {
                    part.nonrisk.push(s + k);
                }
            }
        }
        Ok(part)
    }

    fn classify_range(&self, set: &ScenarioSet, start: usize, end: usize, archive: bool) -> Result<(Vec<bool>, usize)> {
        let mut risk_arch: Vec<&[f64]> = Vec::new();
        let mut safe_arch: Vec<&[f64]> = Vec::new();
        let mut projections = 0;
        let mut flags = Vec::with_capacity(end - start);
        for i in start..end {
            let y = set.point(i);
            if archive {
                // y <= r componentwise: every nonnegative portfolio loses at least as much
                if risk_arch.iter().any(|r| y.iter().zip(*r).all(|(a, b)| a <= b)) {
                    flags.push(true);
                    continue;
                }
                if safe_arch.iter().any(|s| y.iter().zip(*s).all(|(a, b)| a >= b)) {
                    flags.push(false);
                    continue;
                }
            }
            let risk = self.is_risk(y)?;
            projections += 1;
            if archive {
                let arch = if risk { &mut risk_arch } else { &mut safe_arch };
                if arch.len() == ARCHIVE_CAP {
                    arch.remove(0);
                }
                arch.push(y);
            }
            flags.push(risk);
        }
        Ok((flags, projections))
    }

    /// Risk scenarios kept as they are, non-risk scenarios replaced by their
    /// probability-weighted mean carrying their total probability.
    pub fn aggregate(&self, set: &ScenarioSet) -> Result<ScenarioSet> {
        let part = self.classify_batch(set, true)?;
        self.aggregate_with(set, &part)
    }

    pub fn aggregate_with(&self, set: &ScenarioSet, part: &Partition) -> Result<ScenarioSet> {
        if part.nonrisk.is_empty() {
            return Ok(set.clone());
        }
        let d = set.dim();
        let mut pts = Vec::with_capacity((part.risk.len() + 1) * d);
        let mut probs = Vec::with_capacity(part.risk.len() + 1);
        for &i in &part.risk {
            pts.extend_from_slice(set.point(i));
            probs.push(set.prob(i));
        }
        let mut mass = 0.0;
        let mut mean = vec![0.0; d];
        for &i in &part.nonrisk {
            let p = set.prob(i);
            mass += p;
            for (m, v) in mean.iter_mut().zip(set.point(i)) {
                *m += p * v;
            }
        }
        if mass > 0.0 {
            mean.iter_mut().for_each(|m| *m /= mass);
        } else {
            mean = set.point(part.nonrisk[0]).to_vec();
        }
        if self.is_risk(&mean)? {
            log::warn!("aggregated non-risk mean lies in the risk region");
        }
        pts.extend_from_slice(&mean);
        probs.push(mass);
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        let mut out = ScenarioSet::new(d, pts, probs)?;
        out.provenance = Some(Provenance::Aggregated);
        out.seed = set.seed;
        out.labels = set.labels.clone();
        Ok(out)
    }

    /// Fraction of `n` draws that fall outside the risk region.
    pub fn estimate_nonrisk_prob<S: ScenarioSampler + ?Sized>(
        &self,
        sampler: &S,
        n: usize,
        seed: u64,
    ) -> Result<NonriskEstimate> {
        if n == 0 {
            return invalid("need at least one draw");
        }
        let d = sampler.dim();
        let mut rng = rng_from_seed(seed);
        let mut pts = vec![0.0; n * d];
        for row in pts.chunks_exact_mut(d) {
            sampler.draw(&mut rng, row);
        }
        let set = ScenarioSet::uniform(d, pts)?;
        let part = self.classify_batch(&set, true)?;
        let prob = part.nonrisk.len() as f64 / n as f64;
        Ok(NonriskEstimate {
            prob,
            std_error: (prob * (1.0 - prob) / n as f64).sqrt(),
            n,
        })
    }
}

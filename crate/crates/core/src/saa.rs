//! Sample average approximation with optimality-gap estimates and ghost
//! bounds that tighten the feasible box between iterations.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::FeasibleRegion;
use crate::cvar_opt::{discrete_tail, solve, PortfolioProblem, Solution, TailStats};
use crate::distributions::special::normal_quantile;
use crate::distributions::{sample_from, EllipticalDistribution, ScenarioSampler, ScenarioSet};
use crate::error::{invalid, Error, Result};
use crate::risk_region::{NonriskEstimate, RiskRegion};
use crate::rng::derive_seed;
use crate::scenario_gen::aggregation_sampling;

const STREAM_REPLICATION: u64 = 1;
const STREAM_NONRISK: u64 = 2;
const STREAM_VALIDATION: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaaMode {
    BasicSampling,
    Aggregation,
    AggregationGhost,
}

impl SaaMode {
    pub fn label(&self) -> &'static str {
        match self {
            SaaMode::BasicSampling => "basic-sampling",
            SaaMode::Aggregation => "aggregation",
            SaaMode::AggregationGhost => "aggregation-ghost",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaaConfig {
    /// Initial scenario count per replication.
    pub n0: usize,
    /// Scenario count increment per iteration.
    pub dn: usize,
    /// Replications per iteration.
    pub replications: usize,
    /// Confidence level of the one-sided gap bound.
    pub alpha_gap: f64,
    /// Ghost-bound confidence level.
    pub alpha_ghost: f64,
    pub validation_size: usize,
    /// Draws used to estimate the non-risk probability each iteration.
    pub nonrisk_sample: usize,
    pub gap_tol: f64,
    pub ci_tol: f64,
    pub max_iterations: usize,
    pub mode: SaaMode,
}

impl Default for SaaConfig {
    fn default() -> Self {
        SaaConfig {
            n0: 200,
            dn: 100,
            replications: 10,
            alpha_gap: 0.95,
            alpha_ghost: 0.99,
            validation_size: 10_000,
            nonrisk_sample: 2000,
            gap_tol: 0.0,
            ci_tol: 0.0,
            max_iterations: 8,
            mode: SaaMode::AggregationGhost,
        }
    }
}

impl SaaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 {
            return invalid("initial sample size must be at least 2");
        }
        if self.replications < 2 {
            return invalid("need at least two replications");
        }
        for (name, a) in [("alpha_gap", self.alpha_gap), ("alpha_ghost", self.alpha_ghost)] {
            if !(a > 0.0 && a < 1.0) {
                return invalid(format!("{name} must lie in (0, 1), got {a}"));
            }
        }
        if self.max_iterations == 0 || self.validation_size == 0 {
            return invalid("iteration cap and validation size must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// `mean_m g_m(x) - mean_m nu_m`, unclipped.
    pub raw: f64,
    /// `max(raw, 0)`.
    pub gap: f64,
    pub ci_halfwidth: f64,
}

/// Gap estimates for each candidate. `g[c][m]` is the objective of candidate
/// `c` on replication `m`; `nu[m]` is the optimal value of replication `m`.
/// The half-width is `z_conf * S / sqrt(M)` with `S` the sample standard
/// deviation of `g[c][m] - nu[m]`.
pub fn estimate_gap(g: &[Vec<f64>], nu: &[f64], confidence: f64) -> Result<Vec<GapEstimate>> {
    let m = nu.len();
    if m < 2 {
        return invalid("gap estimation needs at least two replications");
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return invalid("confidence must lie in (0, 1)");
    }
    let z = normal_quantile(confidence);
    let nu_bar = nu.iter().sum::<f64>() / m as f64;
    g.iter()
        .map(|row| {
            if row.len() != m {
                return invalid("candidate evaluations do not match the replication count");
            }
            let diffs: Vec<f64> = row.iter().zip(nu).map(|(a, b)| a - b).collect();
            let mean_diff = diffs.iter().sum::<f64>() / m as f64;
            let var = diffs.iter().map(|v| (v - mean_diff).powi(2)).sum::<f64>() / (m - 1) as f64;
            let raw = row.iter().sum::<f64>() / m as f64 - nu_bar;
            Ok(GapEstimate {
                raw,
                gap: raw.max(0.0),
                ci_halfwidth: z * var.sqrt() / (m as f64).sqrt(),
            })
        })
        .collect()
}

/// Ghost box from replication solutions:
/// `l = max(xbar - z s/sqrt(M), 0)`, `u = min(xbar + z s/sqrt(M), cap)`,
/// intersected with the previous box. With a cardinality limit `l_max` only
/// the `l_max` largest mean weights keep a positive lower bound.
pub fn ghost_bounds(
    solutions: &[Vec<f64>],
    alpha: f64,
    prev_lower: &[f64],
    prev_upper: &[f64],
    max_assets: Option<usize>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = solutions.len();
    if m < 2 {
        return invalid("ghost bounds need at least two solutions");
    }
    let d = prev_lower.len();
    let z = normal_quantile(alpha);
    let mut lower = vec![0.0; d];
    let mut upper = vec![0.0; d];
    let mut mean = vec![0.0; d];
    for i in 0..d {
        let xbar = solutions.iter().map(|x| x[i]).sum::<f64>() / m as f64;
        let var = solutions.iter().map(|x| (x[i] - xbar).powi(2)).sum::<f64>() / (m - 1) as f64;
        let half = z * var.sqrt() / (m as f64).sqrt();
        mean[i] = xbar;
        lower[i] = (xbar - half).max(0.0).max(prev_lower[i]);
        upper[i] = (xbar + half).min(prev_upper[i]);
        if lower[i] > upper[i] {
            // rounding in the mean of identical solutions
            let mid = xbar.clamp(prev_lower[i], prev_upper[i]);
            lower[i] = mid.min(lower[i]);
            upper[i] = mid.max(upper[i]);
        }
    }
    if let Some(k) = max_assets {
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
        for &i in order.iter().skip(k) {
            lower[i] = prev_lower[i];
        }
    }
    Ok((lower, upper))
}

/// Whether a box admits a portfolio with at most `max_assets` holdings.
fn cardinality_reachable(lower: &[f64], upper: &[f64], max_assets: usize, capital: f64) -> bool {
    let forced: Vec<usize> = (0..lower.len()).filter(|&i| lower[i] > 0.0).collect();
    if forced.len() > max_assets {
        return false;
    }
    let mut rest: Vec<f64> = (0..lower.len()).filter(|i| lower[*i] <= 0.0).map(|i| upper[i]).collect();
    rest.sort_by(|a, b| b.total_cmp(a));
    let reach: f64 = forced.iter().map(|&i| upper[i]).sum::<f64>()
        + rest.iter().take(max_assets - forced.len()).sum::<f64>();
    reach >= capital * (1.0 - 1e-12) && forced.iter().map(|&i| lower[i]).sum::<f64>() <= capital * (1.0 + 1e-12)
}

/// Applies a ghost update to `region`, widening the confidence level once if
/// the box leaves no feasible portfolio.
pub fn update_ghost_bounds(
    region: &FeasibleRegion,
    solutions: &[Vec<f64>],
    alpha: f64,
    max_assets: Option<usize>,
) -> Result<FeasibleRegion> {
    let mut a = alpha;
    let mut last_err = None;
    for _ in 0..2 {
        let (lo, hi) = ghost_bounds(solutions, a, region.lower(), region.upper(), max_assets)?;
        let ok_card = max_assets.map_or(true, |k| cardinality_reachable(&lo, &hi, k, region.capital()));
        if ok_card {
            match region.with_bounds(&lo, &hi) {
                Ok(r) => return Ok(r),
                Err(e) => last_err = Some(e),
            }
        }
        a = 0.5 * (1.0 + a);
    }
    Err(match last_err {
        Some(Error::Infeasible(msg)) | Some(Error::InvalidInput(msg)) => {
            Error::Infeasible(format!("ghost bounds leave no feasible portfolio: {msg}"))
        }
        Some(e) => e,
        None => Error::Infeasible("ghost bounds leave no portfolio within the cardinality limit".into()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub seed: u64,
    pub scenarios: usize,
    pub effective_size: usize,
    pub optimal_value: f64,
    pub x: Vec<f64>,
    pub gap: GapEstimate,
}

/// Record of one outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaaState {
    pub mode: SaaMode,
    pub iteration: usize,
    pub sample_size: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub replications: Vec<Replication>,
    pub nu_bar: f64,
    pub best_gap: f64,
    pub best_ci_halfwidth: f64,
    pub best_candidate: usize,
    pub nonrisk: Option<NonriskEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateScore {
    pub iteration: usize,
    pub replication: usize,
    pub validation: TailStats,
    pub validation_objective: f64,
}

#[derive(Clone, Debug)]
pub struct SaaOutcome {
    pub best: Solution,
    pub best_score: CandidateScore,
    pub history: Vec<SaaState>,
    /// Out-of-sample scores of every candidate, in history order.
    pub scores: Vec<CandidateScore>,
    /// Wall-clock seconds per iteration.
    pub timings: Vec<f64>,
}

impl SaaOutcome {
    /// Out-of-sample scores of the final iteration's candidates.
    pub fn final_scores(&self) -> Vec<&CandidateScore> {
        let last = self.history.last().map(|s| s.iteration).unwrap_or(0);
        self.scores.iter().filter(|s| s.iteration == last).collect()
    }

    /// History as JSON lines.
    pub fn history_jsonl(&self) -> String {
        self.history
            .iter()
            .map(|s| serde_json::to_string(s).expect("history serializes") + "\n")
            .collect()
    }
}

/// Runs the SAA loop. `surrogate` defines the risk region used by the
/// aggregation modes and the non-risk probability estimate.
pub fn run_saa<S: ScenarioSampler + ?Sized>(
    problem: &PortfolioProblem,
    sampler: &S,
    surrogate: Option<&EllipticalDistribution>,
    config: &SaaConfig,
    seed: u64,
) -> Result<SaaOutcome> {
    config.validate()?;
    if sampler.dim() != problem.dim() {
        return invalid("sampler and problem dimensions differ");
    }
    let aggregating = config.mode != SaaMode::BasicSampling;
    if aggregating && surrogate.is_none() {
        return invalid("aggregation modes need a surrogate elliptical distribution");
    }
    let max_assets = problem.cardinality.as_ref().map(|c| c.max_assets);
    let m = config.replications;
    let mut current = problem.clone();
    let mut n = config.n0;
    let mut history = Vec::new();
    let mut timings = Vec::new();
    let mut solutions_by_iter: Vec<Vec<Solution>> = Vec::new();

    for t in 0..config.max_iterations {
        let started = Instant::now();
        let region = match surrogate {
            Some(dist) => Some(RiskRegion::from_region(dist.clone(), &current.region, problem.beta)?),
            None => None,
        };
        let results: Vec<Result<(ScenarioSet, usize, Solution, u64)>> = (0..m)
            .into_par_iter()
            .map(|r| {
                let s = derive_seed(seed, &[STREAM_REPLICATION, t as u64, r as u64]);
                let (set, eff) = if aggregating {
                    let rep = aggregation_sampling(region.as_ref().expect("surrogate"), sampler, n - 1, s)?;
                    let eff = rep.effective_sample_size;
                    (rep.scenario_set, eff)
                } else {
                    (sample_from(sampler, n, s)?, n)
                };
                let sol = solve(&current, &set)?;
                Ok((set, eff, sol, s))
            })
            .collect();
        let mut sets = Vec::with_capacity(m);
        let mut sols = Vec::with_capacity(m);
        let mut meta = Vec::with_capacity(m);
        for r in results {
            let (set, eff, sol, s) = r?;
            meta.push((s, set.len(), eff));
            sets.push(set);
            sols.push(sol);
        }
        let nu: Vec<f64> = sols.iter().map(|s| s.objective).collect();
        let g: Vec<Vec<f64>> = sols
            .par_iter()
            .map(|cand| {
                sets.iter()
                    .map(|set| current.objective_value(discrete_tail(set, &cand.x, current.beta).cvar, &cand.x))
                    .collect()
            })
            .collect();
        let gaps = estimate_gap(&g, &nu, config.alpha_gap)?;
        let best_candidate = (0..m)
            .min_by(|&a, &b| gaps[a].raw.total_cmp(&gaps[b].raw).then(a.cmp(&b)))
            .expect("replications");
        let nonrisk = match &region {
            Some(r) => Some(r.estimate_nonrisk_prob(
                sampler,
                config.nonrisk_sample,
                derive_seed(seed, &[STREAM_NONRISK]),
            )?),
            None => None,
        };
        let replications = (0..m)
            .map(|r| Replication {
                seed: meta[r].0,
                scenarios: meta[r].1,
                effective_size: meta[r].2,
                optimal_value: nu[r],
                x: sols[r].x.clone(),
                gap: gaps[r],
            })
            .collect();
        history.push(SaaState {
            mode: config.mode,
            iteration: t,
            sample_size: n,
            lower: current.region.lower().to_vec(),
            upper: current.region.upper().to_vec(),
            replications,
            nu_bar: nu.iter().sum::<f64>() / m as f64,
            best_gap: gaps[best_candidate].gap,
            best_ci_halfwidth: gaps[best_candidate].ci_halfwidth,
            best_candidate,
            nonrisk,
        });
        let xs: Vec<Vec<f64>> = sols.iter().map(|s| s.x.clone()).collect();
        solutions_by_iter.push(sols);
        timings.push(started.elapsed().as_secs_f64());

        let done = gaps.iter().any(|gp| gp.gap <= config.gap_tol && gp.ci_halfwidth <= config.ci_tol);
        if done || t + 1 == config.max_iterations {
            break;
        }
        n += config.dn;
        if config.mode == SaaMode::AggregationGhost {
            let region = update_ghost_bounds(&current.region, &xs, config.alpha_ghost, max_assets)?;
            current = current.with_region(region)?;
        }
    }

    // out-of-sample screening
    let validation = sample_from(sampler, config.validation_size, derive_seed(seed, &[STREAM_VALIDATION]))?;
    let mut scores = Vec::new();
    let mut flat = Vec::new();
    for (t, sols) in solutions_by_iter.iter().enumerate() {
        for (r, sol) in sols.iter().enumerate() {
            let tail = discrete_tail(&validation, &sol.x, problem.beta);
            scores.push(CandidateScore {
                iteration: t,
                replication: r,
                validation: tail,
                validation_objective: problem.objective_value(tail.cvar, &sol.x),
            });
            flat.push(sol);
        }
    }
    let best_idx = (0..scores.len())
        .min_by(|&a, &b| {
            let (sa, sb) = (&scores[a].validation, &scores[b].validation);
            sa.cvar.total_cmp(&sb.cvar).then(sa.var.total_cmp(&sb.var)).then(a.cmp(&b))
        })
        .expect("at least one candidate");
    Ok(SaaOutcome {
        best: flat[best_idx].clone(),
        best_score: scores[best_idx].clone(),
        history,
        scores,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_replications_have_zero_gap() {
        let g = vec![vec![1.0, 2.0, 3.0]];
        let nu = vec![1.0, 2.0, 3.0];
        let e = estimate_gap(&g, &nu, 0.95).unwrap();
        assert_eq!(e[0].gap, 0.0);
        assert_eq!(e[0].ci_halfwidth, 0.0);
        assert!(estimate_gap(&g, &[1.0], 0.95).is_err());
    }

    #[test]
    fn gap_is_translation_invariant() {
        let g = vec![vec![1.2, 2.5, 3.1, 0.7]];
        let nu = vec![1.0, 2.0, 3.0, 0.5];
        let a = estimate_gap(&g, &nu, 0.95).unwrap()[0];
        let g2 = vec![g[0].iter().map(|v| v + 10.0).collect()];
        let nu2: Vec<f64> = nu.iter().map(|v| v + 10.0).collect();
        let b = estimate_gap(&g2, &nu2, 0.95).unwrap()[0];
        assert!((a.raw - b.raw).abs() < 1e-12 && (a.ci_halfwidth - b.ci_halfwidth).abs() < 1e-12);
    }

    #[test]
    fn identical_solutions_give_point_box() {
        let x = vec![0.2, 0.3, 0.5];
        let (l, u) = ghost_bounds(&[x.clone(), x.clone(), x.clone()], 0.99, &[0.0; 3], &[1.0; 3], None).unwrap();
        for i in 0..3 {
            assert!((l[i] - x[i]).abs() < 1e-15 && (u[i] - x[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_spread_clamps_to_previous_box() {
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        let (l, u) = ghost_bounds(&[a, b], 0.99, &[0.0; 2], &[0.8; 2], None).unwrap();
        assert_eq!(l, vec![0.0, 0.0]);
        assert_eq!(u, vec![0.8, 0.8]);
    }
}

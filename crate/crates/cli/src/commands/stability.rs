//! Optimality gaps of P1 solutions from aggregation sampling and from basic
//! sampling at matched set sizes.

use std::time::Instant;

use rayon::prelude::*;

use riskagg::cones::{conic_hull, FeasibleRegion};
use riskagg::cvar_opt::{discrete_tail, solve_exact_elliptical, solve_lp, PortfolioProblem};
use riskagg::distributions::sample_from;
use riskagg::risk_region::RiskRegion;
use riskagg::rng::derive_seed;
use riskagg::scenario_gen::aggregation_sampling;

use crate::config::{check_beta, check_positive, Matching, StabilityConfig};
use crate::output::{cell, mean_sd, Table};
use crate::source::{Instance, Universe};
use crate::{CliResult, RunContext};

const STREAM_AGG: u64 = 2;
const STREAM_BASIC: u64 = 3;
const STREAM_REFERENCE: u64 = 4;

/// Evaluates true objective values of candidate portfolios.
enum Truth {
    Exact { optimum: f64 },
    Reference { set: riskagg::distributions::ScenarioSet, optimum: f64 },
}

impl Truth {
    fn build(problem: &PortfolioProblem, inst: &Instance, size: usize, seed: u64) -> CliResult<Self> {
        Ok(match &inst.empirical {
            None => Truth::Exact { optimum: solve_exact_elliptical(problem, &inst.surrogate)?.objective },
            Some(s) => {
                let set = sample_from(s, size, seed)?;
                let optimum = solve_lp(problem, &set)?.objective;
                Truth::Reference { set, optimum }
            }
        })
    }

    fn gap(&self, problem: &PortfolioProblem, inst: &Instance, x: &[f64]) -> CliResult<f64> {
        Ok(match self {
            Truth::Exact { optimum } => {
                let cvar = inst.surrogate.loss_stats(x, problem.beta)?.cvar;
                problem.objective_value(cvar, x) - optimum
            }
            Truth::Reference { set, optimum } => {
                problem.objective_value(discrete_tail(set, x, problem.beta).cvar, x) - optimum
            }
        })
    }
}

struct SetResult {
    effective: usize,
    agg: f64,
    basic_rc: f64,
    basic_eff: f64,
}

pub fn run(ctx: &RunContext, cfg: StabilityConfig) -> CliResult<()> {
    check_beta(cfg.beta)?;
    check_positive("trials", cfg.trials)?;
    check_positive("sets", cfg.sets)?;
    check_positive("n_risk", cfg.n_risk)?;
    check_positive("reference_size", cfg.reference_size)?;
    let universe = Universe::load(&cfg.source, ctx.seed)?;
    let mut summary = Table::new([
        "d",
        "trial",
        "assets",
        "n_risk",
        "mean_effective_size",
        "aggregation_mean_gap",
        "aggregation_sd_gap",
        "basic_risk_count_mean_gap",
        "basic_risk_count_sd_gap",
        "basic_effective_mean_gap",
        "basic_effective_sd_gap",
        "matching",
        "aggregation_better",
    ]);
    let mut sets = Table::new(["d", "trial", "set", "method", "scenarios", "gap"]);
    for &d in &cfg.dims {
        for t in 0..cfg.trials {
            let started = Instant::now();
            let inst = universe.instance(d, t, ctx.seed)?;
            let region = FeasibleRegion::simplex(d, 1.0)?;
            let problem = PortfolioProblem::min_cvar(region.clone(), inst.surrogate.mu().to_vec(), cfg.beta, cfg.tau)?;
            let risk = if cfg.whole_space {
                RiskRegion::with_threshold(inst.surrogate.clone(), conic_hull(&region)?, cfg.beta, 0.0)?
            } else {
                RiskRegion::from_region(inst.surrogate.clone(), &region, cfg.beta)?
            };
            let truth = Truth::build(
                &problem,
                &inst,
                cfg.reference_size,
                derive_seed(ctx.seed, &[STREAM_REFERENCE, d as u64, t as u64]),
            )?;
            let key = |stream: u64, s: usize| derive_seed(ctx.seed, &[stream, d as u64, t as u64, s as u64]);
            let results: Vec<CliResult<SetResult>> = (0..cfg.sets)
                .into_par_iter()
                .map(|s| {
                    let rep = aggregation_sampling(&risk, inst.sampler(), cfg.n_risk, key(STREAM_AGG, s))?;
                    let x_agg = solve_lp(&problem, &rep.scenario_set)?.x;
                    let rc = sample_from(inst.sampler(), rep.scenario_set.len(), key(STREAM_BASIC, s))?;
                    let eff = sample_from(inst.sampler(), rep.effective_sample_size, key(STREAM_BASIC, s))?;
                    Ok(SetResult {
                        effective: rep.effective_sample_size,
                        agg: truth.gap(&problem, &inst, &x_agg)?,
                        basic_rc: truth.gap(&problem, &inst, &solve_lp(&problem, &rc)?.x)?,
                        basic_eff: truth.gap(&problem, &inst, &solve_lp(&problem, &eff)?.x)?,
                    })
                })
                .collect();
            let results = results.into_iter().collect::<CliResult<Vec<_>>>()?;
            for (s, r) in results.iter().enumerate() {
                for (method, size, gap) in [
                    ("aggregation", cfg.n_risk + 1, r.agg),
                    ("basic-risk-count", cfg.n_risk + 1, r.basic_rc),
                    ("basic-effective", r.effective, r.basic_eff),
                ] {
                    sets.push(vec![cell(d), cell(t), cell(s), method.into(), cell(size), cell(gap)]);
                }
            }
            let col = |f: fn(&SetResult) -> f64| mean_sd(&results.iter().map(f).collect::<Vec<_>>());
            let (am, asd) = col(|r| r.agg);
            let (rm, rsd) = col(|r| r.basic_rc);
            let (em, esd) = col(|r| r.basic_eff);
            let mean_eff = results.iter().map(|r| r.effective as f64).sum::<f64>() / results.len() as f64;
            let (bm, bsd) = match cfg.matching {
                Matching::RiskCount => (rm, rsd),
                Matching::Effective => (em, esd),
            };
            let matching = match cfg.matching {
                Matching::RiskCount => "risk-count",
                Matching::Effective => "effective",
            };
            summary.push(vec![
                cell(d),
                cell(t),
                inst.asset_list(),
                cell(cfg.n_risk),
                cell(mean_eff),
                cell(am),
                cell(asd),
                cell(rm),
                cell(rsd),
                cell(em),
                cell(esd),
                matching.into(),
                cell(u8::from(am <= bm && asd <= bsd)),
            ]);
            ctx.time(format!("stability d={d} trial={t}"), started.elapsed().as_secs_f64());
        }
    }
    ctx.write_table("stability.csv", &summary)?;
    ctx.write_table("stability_sets.csv", &sets)?;
    Ok(())
}

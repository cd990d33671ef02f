//! Error from solving P1 on an aggregation-reduced set instead of the full
//! sampled set, with the proportion of scenarios removed.

use std::time::Instant;

use rayon::prelude::*;

use riskagg::cones::FeasibleRegion;
use riskagg::cvar_opt::{discrete_tail, solve_lp, PortfolioProblem};
use riskagg::distributions::sample_from;
use riskagg::risk_region::RiskRegion;
use riskagg::rng::derive_seed;

use crate::config::{check_beta, check_positive, ReductionErrorConfig};
use crate::output::{cell, Table};
use crate::source::Universe;
use crate::{CliResult, RunContext};

const STREAM: u64 = 5;

struct Cell {
    error: f64,
    reduced: f64,
    optimum: f64,
}

pub fn run(ctx: &RunContext, cfg: ReductionErrorConfig) -> CliResult<()> {
    check_positive("sets", cfg.sets)?;
    check_positive("trials", cfg.trials)?;
    cfg.betas.iter().try_for_each(|&b| check_beta(b))?;
    for &n in &cfg.sizes {
        if n < 2 {
            return Err(crate::CliError::Config(format!("set size {n} is too small")));
        }
    }
    let universe = Universe::load(&cfg.source, ctx.seed)?;
    let mut header = vec!["d".to_string(), "trial".to_string(), "n".to_string()];
    header.extend(cfg.betas.iter().map(|b| format!("beta={b}")));
    let mut errors = Table::new(header.clone());
    let mut proportions = Table::new(header);
    let mut long = Table::new(["d", "trial", "beta", "n", "set", "error", "reduced_proportion", "optimum"]);
    for &d in &cfg.dims {
        for t in 0..cfg.trials {
            let started = Instant::now();
            let inst = universe.instance(d, t, ctx.seed)?;
            let region = FeasibleRegion::simplex(d, 1.0)?;
            for &n in &cfg.sizes {
                let mut err_row = vec![cell(d), cell(t), cell(n)];
                let mut prop_row = err_row.clone();
                for &beta in &cfg.betas {
                    let problem = PortfolioProblem::min_cvar(region.clone(), inst.surrogate.mu().to_vec(), beta, cfg.tau)?;
                    let risk = RiskRegion::from_region(inst.surrogate.clone(), &region, beta)?;
                    let cells: Vec<CliResult<Cell>> = (0..cfg.sets)
                        .into_par_iter()
                        .map(|s| {
                            // the same sets are used for every beta
                            let seed = derive_seed(ctx.seed, &[STREAM, d as u64, t as u64, n as u64, s as u64]);
                            let set = sample_from(inst.sampler(), n, seed)?;
                            let full = solve_lp(&problem, &set)?;
                            let part = risk.classify_batch(&set, true)?;
                            let reduced = risk.aggregate_with(&set, &part)?;
                            let x = solve_lp(&problem, &reduced)?.x;
                            let value = problem.objective_value(discrete_tail(&set, &x, beta).cvar, &x);
                            Ok(Cell {
                                error: value - full.objective,
                                reduced: part.nonrisk.len() as f64 / n as f64,
                                optimum: full.objective,
                            })
                        })
                        .collect();
                    let cells = cells.into_iter().collect::<CliResult<Vec<_>>>()?;
                    for (s, c) in cells.iter().enumerate() {
                        long.push(vec![
                            cell(d),
                            cell(t),
                            cell(beta),
                            cell(n),
                            cell(s),
                            cell(c.error),
                            cell(c.reduced),
                            cell(c.optimum),
                        ]);
                    }
                    let m = cells.len() as f64;
                    err_row.push(cell(cells.iter().map(|c| c.error).sum::<f64>() / m));
                    prop_row.push(cell(cells.iter().map(|c| c.reduced).sum::<f64>() / m));
                }
                errors.push(err_row);
                proportions.push(prop_row);
            }
            ctx.time(format!("reduction-error d={d} trial={t}"), started.elapsed().as_secs_f64());
        }
    }
    ctx.write_table("reduction_error.csv", &errors)?;
    ctx.write_table("reduction_proportion.csv", &proportions)?;
    ctx.write_table("reduction_sets.csv", &long)?;
    Ok(())
}

//! Non-risk probability by dimension, quota and beta. The wide table has one
//! row per (dimension, trial) and one column per (quota, beta).

use std::time::Instant;

use rayon::prelude::*;

use riskagg::risk_region::{NonriskEstimate, RiskRegion};
use riskagg::rng::derive_seed;

use super::quota_region;
use crate::config::{check_beta, check_positive, ProbTableConfig};
use crate::output::{cell, Table};
use crate::source::Universe;
use crate::{CliResult, RunContext};

const STREAM: u64 = 1;

pub fn run(ctx: &RunContext, cfg: ProbTableConfig) -> CliResult<()> {
    check_positive("trials", cfg.trials)?;
    check_positive("samples", cfg.samples)?;
    cfg.betas.iter().try_for_each(|&b| check_beta(b))?;
    for &d in &cfg.dims {
        for &q in &cfg.quotas {
            quota_region(d, q)?;
        }
    }
    let started = Instant::now();
    let universe = Universe::load(&cfg.source, ctx.seed)?;
    let rows: Vec<(usize, usize)> =
        cfg.dims.iter().flat_map(|&d| (0..cfg.trials).map(move |t| (d, t))).collect();
    let results: Vec<CliResult<(String, Vec<NonriskEstimate>)>> = rows
        .par_iter()
        .map(|&(d, t)| {
            let inst = universe.instance(d, t, ctx.seed)?;
            // common random numbers across the cells of a row
            let seed = derive_seed(ctx.seed, &[STREAM, d as u64, t as u64]);
            let mut ests = Vec::new();
            for &q in &cfg.quotas {
                for &b in &cfg.betas {
                    let region = RiskRegion::from_region(inst.surrogate.clone(), &quota_region(d, q)?, b)?;
                    ests.push(region.estimate_nonrisk_prob(inst.sampler(), cfg.samples, seed)?);
                }
            }
            Ok((inst.asset_list(), ests))
        })
        .collect();

    let mut header = vec!["d".to_string(), "trial".to_string(), "assets".to_string()];
    for &q in &cfg.quotas {
        for &b in &cfg.betas {
            header.push(format!("q={q} beta={b}"));
        }
    }
    let mut wide = Table::new(header);
    let mut long = Table::new(["d", "trial", "quota", "beta", "prob", "std_error", "n"]);
    for (&(d, t), res) in rows.iter().zip(results) {
        let (assets, ests) = res?;
        let mut row = vec![cell(d), cell(t), assets];
        let mut k = 0;
        for &q in &cfg.quotas {
            for &b in &cfg.betas {
                let e = &ests[k];
                row.push(cell(e.prob));
                long.push(vec![cell(d), cell(t), cell(q), cell(b), cell(e.prob), cell(e.std_error), cell(e.n)]);
                k += 1;
            }
        }
        wide.push(row);
    }
    ctx.write_table("prob_table.csv", &wide)?;
    ctx.write_table("prob_table_long.csv", &long)?;
    ctx.time("prob-table", started.elapsed().as_secs_f64());
    Ok(())
}

//! SAA on the cardinality-constrained P1 problem in each mode: best gap and
//! non-risk probability per iteration, and out-of-sample CVaR of the final
//! iteration's candidates.

use std::time::Instant;

use riskagg::cvar_opt::PortfolioProblem;
use riskagg::saa::{run_saa, SaaConfig, SaaOutcome};

use super::quota_region;
use crate::config::{check_beta, CaseStudyConfig};
use crate::output::{cell, median, Table};
use crate::source::Universe;
use crate::{CliError, CliResult, RunContext};

pub fn run(ctx: &RunContext, cfg: CaseStudyConfig) -> CliResult<()> {
    check_beta(cfg.beta)?;
    if cfg.modes.is_empty() {
        return Err(CliError::Config("at least one SAA mode is required".into()));
    }
    if cfg.max_assets == 0 || cfg.max_assets > cfg.d {
        return Err(CliError::Config(format!("max_assets must lie in 1..={}", cfg.d)));
    }
    if (cfg.max_assets as f64) * cfg.cap < 1.0 - 1e-12 {
        return Err(CliError::Config("max_assets * cap must reach the capital 1".into()));
    }
    cfg.saa.validate()?;
    let universe = Universe::load(&cfg.source, ctx.seed)?;
    let inst = universe.instance(cfg.d, 0, ctx.seed)?;
    let region = quota_region(cfg.d, cfg.cap.min(1.0))?;
    let problem = PortfolioProblem::min_cvar(region, inst.surrogate.mu().to_vec(), cfg.beta, cfg.tau)?
        .with_cardinality(cfg.max_assets, cfg.cap.min(1.0))?;

    let mut outcomes: Vec<SaaOutcome> = Vec::new();
    for &mode in &cfg.modes {
        let started = Instant::now();
        let saa = SaaConfig { mode, ..cfg.saa.clone() };
        let out = run_saa(&problem, inst.sampler(), Some(&inst.surrogate), &saa, ctx.seed)?;
        ctx.write_jsonl(&format!("case_study_{}.jsonl", mode.label()), &out.history)?;
        for (t, secs) in out.timings.iter().enumerate() {
            ctx.time(format!("case-study {} iteration {t}", mode.label()), *secs);
        }
        ctx.time(format!("case-study {}", mode.label()), started.elapsed().as_secs_f64());
        outcomes.push(out);
    }

    let iterations = outcomes.iter().map(|o| o.history.len()).max().unwrap_or(0);
    let mut gap_header = vec!["iteration".to_string(), "sample_size".to_string()];
    let mut prob_header = vec!["iteration".to_string()];
    for &mode in &cfg.modes {
        gap_header.push(format!("{} best_gap", mode.label()));
        gap_header.push(format!("{} ci_halfwidth", mode.label()));
        prob_header.push(format!("{} nonrisk_prob", mode.label()));
        prob_header.push(format!("{} std_error", mode.label()));
    }
    let mut gaps = Table::new(gap_header);
    let mut probs = Table::new(prob_header);
    for t in 0..iterations {
        let size = outcomes.iter().find_map(|o| o.history.get(t)).map(|s| s.sample_size);
        let mut g = vec![cell(t), size.map(cell).unwrap_or_default()];
        let mut p = vec![cell(t)];
        for o in &outcomes {
            match o.history.get(t) {
                Some(s) => {
                    g.push(cell(s.best_gap));
                    g.push(cell(s.best_ci_halfwidth));
                    match s.nonrisk {
                        Some(e) => {
                            p.push(cell(e.prob));
                            p.push(cell(e.std_error));
                        }
                        None => p.extend([String::new(), String::new()]),
                    }
                }
                None => {
                    g.extend([String::new(), String::new()]);
                    p.extend([String::new(), String::new()]);
                }
            }
        }
        gaps.push(g);
        probs.push(p);
    }

    let mut oos = Table::new(["mode", "iteration", "replication", "validation_cvar", "validation_var", "validation_objective"]);
    let mut summary = Table::new([
        "mode",
        "iterations",
        "final_best_gap",
        "final_ci_halfwidth",
        "oos_median_cvar",
        "oos_min_cvar",
        "oos_max_cvar",
        "best_validation_cvar",
        "best_support",
        "best_x",
    ]);
    for (mode, o) in cfg.modes.iter().zip(&outcomes) {
        let finals = o.final_scores();
        for s in &finals {
            oos.push(vec![
                mode.label().into(),
                cell(s.iteration),
                cell(s.replication),
                cell(s.validation.cvar),
                cell(s.validation.var),
                cell(s.validation_objective),
            ]);
        }
        let cvars: Vec<f64> = finals.iter().map(|s| s.validation.cvar).collect();
        let last = o.history.last().expect("at least one iteration");
        let support: Vec<String> = o
            .best
            .x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 1e-9)
            .map(|(i, _)| inst.labels[i].clone())
            .collect();
        summary.push(vec![
            mode.label().into(),
            cell(o.history.len()),
            cell(last.best_gap),
            cell(last.best_ci_halfwidth),
            cell(median(&cvars)),
            cell(cvars.iter().copied().fold(f64::INFINITY, f64::min)),
            cell(cvars.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            cell(o.best_score.validation.cvar),
            support.join(";"),
            o.best.x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
        ]);
    }
    ctx.write_table("case_study_gap.csv", &gaps)?;
    ctx.write_table("case_study_nonrisk.csv", &probs)?;
    ctx.write_table("case_study_oos.csv", &oos)?;
    ctx.write_table("case_study_summary.csv", &summary)?;
    Ok(())
}

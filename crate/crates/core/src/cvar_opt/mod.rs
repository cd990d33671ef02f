//! Scenario CVaR evaluation and portfolio optimization.

mod bnb;
mod exact;
mod lp;
mod problem;

use serde::{Deserialize, Serialize};

use crate::distributions::ScenarioSet;
use crate::error::Result;

pub use bnb::{BnbStats, NODE_LIMIT};
pub use exact::solve_exact_elliptical;
pub use lp::solve_lp;
pub use problem::{Cardinality, Objective, PortfolioProblem, Solution, SolutionRecord, Status};

/// Objective perturbation `TIEBREAK * sum_i (i+1) x_i` that makes the
/// reported optimum deterministic among ties.
pub const TIEBREAK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub var: f64,
    pub cvar: f64,
}

/// Exact VaR and CVaR of the discrete loss `-x'Y`, splitting the atom at
/// the quantile.
pub fn discrete_tail(set: &ScenarioSet, x: &[f64], beta: f64) -> TailStats {
    let losses = set.losses(x);
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]));
    let tail = 1.0 - beta;
    let mut acc = 0.0;
    let mut sum = 0.0;
    let mut var = f64::NAN;
    for &s in &order {
        let p = set.prob(s);
        if p <= 0.0 {
            continue;
        }
        if acc + p >= tail * (1.0 - 1e-15) {
            sum += (tail - acc).max(0.0) * losses[s];
            var = losses[s];
            break;
        }
        sum += p * losses[s];
        acc += p;
    }
    if var.is_nan() {
        // weights short of the tail mass through rounding
        if let Some(&s) = order.iter().rev().find(|&&s| set.prob(s) > 0.0) {
            var = losses[s];
        }
    }
    TailStats { var, cvar: sum / tail }
}

pub fn discrete_cvar(set: &ScenarioSet, x: &[f64], beta: f64) -> f64 {
    discrete_tail(set, x, beta).cvar
}

pub fn discrete_var(set: &ScenarioSet, x: &[f64], beta: f64) -> f64 {
    discrete_tail(set, x, beta).var
}

/// Cardinality-constrained optimum by branch and bound.
pub fn solve_cardinality(problem: &PortfolioProblem, set: &ScenarioSet) -> Result<Solution> {
    bnb::branch_and_bound(problem, set).map(|(s, _)| s)
}

/// As [`solve_cardinality`], also reporting the number of nodes explored.
pub fn solve_cardinality_with_stats(problem: &PortfolioProblem, set: &ScenarioSet) -> Result<(Solution, BnbStats)> {
    bnb::branch_and_bound(problem, set)
}

/// Branch and bound when a cardinality limit is configured, otherwise the LP.
pub fn solve(problem: &PortfolioProblem, set: &ScenarioSet) -> Result<Solution> {
    if problem.cardinality.is_some() {
        solve_cardinality(problem, set)
    } else {
        solve_lp(problem, set)
    }
}

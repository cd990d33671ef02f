//! Scenario CVaR minimization through the dual of the auxiliary-variable LP.
//!
//! The primal
//!
//! ```text
//!   min  lambda (alpha + sum_s p_s u_s / (1-beta)) + g'x
//!   s.t. u_s >= -y_s'x - alpha,  u_s >= 0,  1'x = c,  a_k'x <= b_k,  lo <= x <= hi
//! ```
//!
//! has one row per scenario. Its dual has only `d + 1` rows:
//!
//! ```text
//!   min  c zeta + b'eta - lo'r+ + hi'r-
//!   s.t. sum_s pi_s = lambda
//!        sum_s pi_s y_s - zeta 1 - sum_k eta_k a_k + r+ - r- = g
//!        0 <= pi_s <= lambda p_s / (1-beta),  eta, r+, r- >= 0,  zeta free
//! ```
//!
//! and the primal `(alpha, x)` are minus the row multipliers of the dual.

use crate::cones::LinearRow;
use crate::distributions::ScenarioSet;
use crate::error::{invalid, Error, Result};
use crate::solvers::{LinearProgram, RowKind};

use super::problem::{PortfolioProblem, Solution, Status};
use super::{discrete_tail, TIEBREAK};

const WARM_START_SIZE: usize = 2000;
const WARM_START_STRIDE: usize = 8;
const SNAP_TOL: f64 = 1e-14;

/// Per-node modifications used by branch and bound.
#[derive(Clone, Debug, Default)]
pub(crate) struct Restriction {
    pub upper: Option<Vec<f64>>,
    pub rows: Vec<LinearRow>,
}

pub(crate) struct LpOutcome {
    pub x: Vec<f64>,
    /// Primal objective including the tie-break perturbation.
    pub value: f64,
    pub cvar: f64,
    pub var: f64,
}

pub(crate) fn solve_restricted(problem: &PortfolioProblem, set: &ScenarioSet, r: &Restriction) -> Result<LpOutcome> {
    let d = problem.dim();
    if set.is_empty() {
        return invalid("scenario set is empty");
    }
    if set.dim() != d {
        return invalid("scenario and problem dimensions differ");
    }
    let n = set.len();
    let beta = problem.beta;
    let lam = problem.lambda();
    let region = &problem.region;
    let cap = region.capital();

    let mut rows: Vec<LinearRow> = region.rows().to_vec();
    if let super::Objective::P1 { tau } = problem.objective {
        rows.push(LinearRow {
            coeffs: problem.mu.iter().map(|m| -m).collect(),
            rhs: -tau,
        });
    }
    rows.extend(r.rows.iter().cloned());

    let lo = region.lower();
    let hi: Vec<f64> = match &r.upper {
        Some(u) => u.iter().zip(region.upper()).map(|(a, b)| a.min(*b).min(cap)).collect(),
        None => region.upper().iter().map(|u| u.min(cap)).collect(),
    };
    // primal linear term g = -(1-lambda) mu + tiebreak
    let g: Vec<f64> = (0..d)
        .map(|i| -(1.0 - lam) * problem.mu[i] + TIEBREAK * (i + 1) as f64)
        .collect();

    let k = rows.len();
    let eta0 = n;
    let zeta = eta0 + k;
    let rp0 = zeta + 1;
    let rm0 = rp0 + d;
    let ncols = rm0 + d;
    let mut lp = LinearProgram::new(ncols);

    let tail = 1.0 - beta;
    for s in 0..n {
        lp.set_bounds(s, 0.0, lam * set.prob(s) / tail);
    }
    for (j, row) in rows.iter().enumerate() {
        lp.set_cost(eta0 + j, row.rhs);
    }
    lp.set_bounds(zeta, f64::NEG_INFINITY, f64::INFINITY);
    lp.set_cost(zeta, cap);
    for i in 0..d {
        lp.set_cost(rp0 + i, -lo[i]);
        lp.set_cost(rm0 + i, hi[i]);
    }

    // crash: worst scenarios at a reference portfolio start at their upper
    // bound; large sets take the reference from a strided subsample
    if lam > 0.0 {
        let x_ref = if n > WARM_START_SIZE {
            let idx: Vec<usize> = (0..n).step_by(WARM_START_STRIDE).collect();
            solve_restricted(problem, &set.select(&idx)?, r)?.x
        } else {
            region.feasible_point().to_vec()
        };
        let losses = set.losses(&x_ref);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
        let mut mass = 0.0;
        for s in order {
            if mass + set.prob(s) > tail {
                break;
            }
            mass += set.prob(s);
            lp.start_at_upper(s);
        }
    }

    let mut row0 = vec![0.0; ncols];
    row0[..n].iter_mut().for_each(|v| *v = 1.0);
    lp.add_row(row0, RowKind::Eq, lam);
    for i in 0..d {
        let mut row = vec![0.0; ncols];
        for s in 0..n {
            row[s] = set.point(s)[i];
        }
        for (j, r) in rows.iter().enumerate() {
            row[eta0 + j] = -r.coeffs[i];
        }
        row[zeta] = -1.0;
        row[rp0 + i] = 1.0;
        row[rm0 + i] = -1.0;
        lp.add_row(row, RowKind::Eq, g[i]);
    }

    let sol = match lp.solve() {
        Ok(s) => s,
        Err(Error::Unbounded) => return Err(Error::Infeasible("portfolio constraints admit no solution".into())),
        Err(Error::Infeasible(_)) => return Err(Error::Unbounded),
        Err(e) => return Err(e),
    };
    let mut x: Vec<f64> = sol.duals[1..=d].iter().map(|v| -v).collect();
    for i in 0..d {
        // snap dual round-off onto the bounds; `+ 0.0` drops negative zero
        let v = x[i].clamp(lo[i], hi[i]);
        x[i] = if v - lo[i] <= SNAP_TOL {
            lo[i]
        } else if hi[i] - v <= SNAP_TOL {
            hi[i]
        } else {
            v
        } + 0.0;
    }
    let value = -sol.objective;
    let tail_stats = discrete_tail(set, &x, beta);
    let gx: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
    let cvar = if lam > 0.0 { (value - gx) / lam } else { tail_stats.cvar };
    Ok(LpOutcome {
        x,
        value,
        cvar,
        var: tail_stats.var,
    })
}

/// Optimal portfolio for a continuous problem on a scenario set.
pub fn solve_lp(problem: &PortfolioProblem, set: &ScenarioSet) -> Result<Solution> {
    let out = solve_restricted(problem, set, &Restriction::default())?;
    Ok(Solution {
        objective: problem.objective_value(out.cvar, &out.x),
        expected_return: problem.expected_return(&out.x),
        cvar: out.cvar,
        var: out.var,
        x: out.x,
        z: None,
        status: Status::Optimal,
    })
}

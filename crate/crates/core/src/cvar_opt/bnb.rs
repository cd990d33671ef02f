//! Best-first branch and bound over the support indicators `z`.
//!
//! With `x_i <= u_i z_i` and `z` relaxed to `[0, 1]`, the indicators project
//! out to the single row `sum_{free i} x_i / u_i <= l - #(fixed to one)`;
//! fixing `z_i = 0` sets the upper bound of `x_i` to zero.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cones::LinearRow;
use crate::distributions::ScenarioSet;
use crate::error::{invalid, Error, Result};

use super::lp::{solve_restricted, LpOutcome, Restriction};
use super::problem::{PortfolioProblem, Solution, Status};

pub const NODE_LIMIT: usize = 100_000;
const SUPPORT_TOL: f64 = 1e-9;
const PRUNE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Fix {
    Free,
    Zero,
    One,
}

struct Node {
    bound: f64,
    seq: usize,
    fix: Vec<Fix>,
    out: LpOutcome,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: the smallest bound, then the oldest node, comes out first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.seq.cmp(&self.seq))
    }
}

pub struct BnbStats {
    pub nodes: usize,
}

fn relax(problem: &PortfolioProblem, set: &ScenarioSet, fix: &[Fix]) -> Result<Option<LpOutcome>> {
    let card = problem.cardinality.as_ref().expect("cardinality configured");
    let d = problem.dim();
    let ones = fix.iter().filter(|f| **f == Fix::One).count();
    if ones > card.max_assets {
        return Ok(None);
    }
    let upper: Vec<f64> = (0..d)
        .map(|i| if fix[i] == Fix::Zero { 0.0 } else { card.cap[i] })
        .collect();
    let coeffs: Vec<f64> = (0..d)
        .map(|i| if fix[i] == Fix::Free && card.cap[i] > 0.0 { 1.0 / card.cap[i] } else { 0.0 })
        .collect();
    let restriction = Restriction {
        upper: Some(upper),
        rows: vec![LinearRow {
            coeffs,
            rhs: (card.max_assets - ones) as f64,
        }],
    };
    match solve_restricted(problem, set, &restriction) {
        Ok(out) => Ok(Some(out)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub(crate) fn branch_and_bound(problem: &PortfolioProblem, set: &ScenarioSet) -> Result<(Solution, BnbStats)> {
    let card = problem
        .cardinality
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("no cardinality limit configured".into()))?;
    let d = problem.dim();
    let l = card.max_assets;
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    let mut nodes = 1;
    let root = vec![Fix::Free; d];
    if let Some(out) = relax(problem, set, &root)? {
        heap.push(Node { bound: out.value, seq, fix: root, out });
    }
    let mut best: Option<(f64, LpOutcome, Vec<Fix>)> = None;
    while let Some(node) = heap.pop() {
        if let Some((inc, _, _)) = &best {
            if node.bound >= inc - PRUNE_TOL * (1.0 + inc.abs()) {
                break;
            }
        }
        let x = &node.out.x;
        let support = (0..d)
            .filter(|&i| node.fix[i] == Fix::One || x[i] > SUPPORT_TOL)
            .count();
        if support <= l {
            best = Some((node.bound, node.out, node.fix));
            continue;
        }
        // most fractional free indicator; a free asset at its cap still counts
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..d {
            if node.fix[i] != Fix::Free || x[i] <= SUPPORT_TOL {
                continue;
            }
            let z = (x[i] / card.cap[i]).min(1.0);
            let frac = z.min(1.0 - z);
            if pick.map_or(true, |(_, f)| frac > f) {
                pick = Some((i, frac));
            }
        }
        let Some((i, _)) = pick else {
            return invalid("branching found no free support variable");
        };
        for choice in [Fix::Zero, Fix::One] {
            nodes += 1;
            if nodes > NODE_LIMIT {
                return Err(Error::NodeLimit(NODE_LIMIT));
            }
            let mut fix = node.fix.clone();
            fix[i] = choice;
            if let Some(out) = relax(problem, set, &fix)? {
                seq += 1;
                heap.push(Node { bound: out.value, seq, fix, out });
            }
        }
    }
    let (_, out, fix) = best.ok_or_else(|| Error::Infeasible("no portfolio satisfies the cardinality limit".into()))?;
    let mut z: Vec<u8> = (0..d)
        .map(|i| u8::from(fix[i] == Fix::One || out.x[i] > SUPPORT_TOL))
        .collect();
    // keep the indicator count at most l even when tiny weights were counted
    let mut extra = z.iter().filter(|v| **v == 1).count().saturating_sub(l);
    for i in (0..d).rev() {
        if extra == 0 {
            break;
        }
        if z[i] == 1 && fix[i] != Fix::One && out.x[i] <= SUPPORT_TOL {
            z[i] = 0;
            extra -= 1;
        }
    }
    let sol = Solution {
        objective: problem.objective_value(out.cvar, &out.x),
        expected_return: problem.expected_return(&out.x),
        cvar: out.cvar,
        var: out.var,
        x: out.x,
        z: Some(z),
        status: Status::Optimal,
    };
    Ok((sol, BnbStats { nodes }))
}

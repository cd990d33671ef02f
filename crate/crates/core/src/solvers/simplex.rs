//! Dense revised simplex for small and medium linear programs
//!
//! ```text
//!   minimize   c'x
//!   subject to a_i'x (<=, >=, =) b_i
//!              lower <= x <= upper      (bounds may be infinite)
//! ```
//!
//! Bounded-variable primal simplex with an explicit basis inverse, two-phase
//! start from artificial variables, Dantzig pricing and a switch to Bland's
//! rule after a run of degenerate pivots. The basis inverse is refactored
//! periodically from scratch to contain drift.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PARTIAL_PRICING_MIN: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct LpOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub max_iterations: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            max_iterations: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `c - A'y` the reduced costs.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
struct Row {
    coeffs: Vec<f64>,
    kind: RowKind,
    rhs: f64,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    n: usize,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    start_at_upper: Vec<bool>,
    rows: Vec<Row>,
}

impl LinearProgram {
    /// New program over `n` variables, all in `[0, +inf)` with zero cost.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            n,
            cost: vec![0.0; n],
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            start_at_upper: vec![false; n],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_cost(&mut self, j: usize, c: f64) {
        self.cost[j] = c;
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    /// Hint that variable `j` should start nonbasic at its upper bound.
    pub fn start_at_upper(&mut self, j: usize) {
        self.start_at_upper[j] = true;
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) {
        assert_eq!(coeffs.len(), self.n, "row length must equal the variable count");
        self.rows.push(Row { coeffs, kind, rhs });
    }

    pub fn add_sparse_row(&mut self, entries: &[(usize, f64)], kind: RowKind, rhs: f64) {
        let mut coeffs = vec![0.0; self.n];
        for &(j, v) in entries {
            coeffs[j] += v;
        }
        self.add_row(coeffs, kind, rhs);
    }

    pub fn solve(&self) -> Result<LpSolution> {
        self.solve_with(&LpOptions::default())
    }

    pub fn solve_with(&self, opts: &LpOptions) -> Result<LpSolution> {
        for j in 0..self.n {
            if self.lower[j] > self.upper[j] {
                return Err(Error::Infeasible(format!("variable {j} has lower > upper")));
            }
            if !self.cost[j].is_finite() {
                return Err(Error::InvalidInput(format!("non-finite cost on variable {j}")));
            }
        }
        if self.rows.iter().any(|r| !r.rhs.is_finite() || r.coeffs.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("non-finite constraint data".into()));
        }
        let mut s = Simplex::build(self, opts);
        s.run_phase_one()?;
        s.run_phase_two(self)?;
        Ok(s.extract(self))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum State {
    Basic(usize),
    AtLower,
    AtUpper,
    FreeZero,
}

struct Simplex {
    m: usize,
    n_struct: usize,
    ntot: usize,
    first_art: usize,
    // column-major m x ntot
    a: Vec<f64>,
    b: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    opts: LpOptions,
    iterations: usize,
    max_iterations: usize,
    duals: Vec<f64>,
}

impl Simplex {
    fn build(lp: &LinearProgram, opts: &LpOptions) -> Self {
        let m = lp.rows.len();
        let n = lp.n;
        let n_slack = lp.rows.iter().filter(|r| r.kind != RowKind::Eq).count();
        let first_art = n + n_slack;
        let ntot = first_art + m;
        let mut a = vec![0.0; m * ntot];
        let mut lo = Vec::with_capacity(ntot);
        let mut hi = Vec::with_capacity(ntot);
        let mut b = Vec::with_capacity(m);
        for (i, row) in lp.rows.iter().enumerate() {
            for j in 0..n {
                a[j * m + i] = row.coeffs[j];
            }
            b.push(row.rhs);
        }
        lo.extend_from_slice(&lp.lower);
        hi.extend_from_slice(&lp.upper);
        let mut k = n;
        for (i, row) in lp.rows.iter().enumerate() {
            match row.kind {
                RowKind::Le => a[k * m + i] = 1.0,
                RowKind::Ge => a[k * m + i] = -1.0,
                RowKind::Eq => continue,
            }
            lo.push(0.0);
            hi.push(f64::INFINITY);
            k += 1;
        }
        let mut x = vec![0.0; ntot];
        let mut state = vec![State::AtLower; ntot];
        for j in 0..first_art {
            let (l, u) = (lo[j], hi[j]);
            let at_upper_hint = j < n && lp.start_at_upper[j] && u.is_finite();
            if at_upper_hint || (!l.is_finite() && u.is_finite()) {
                x[j] = u;
                state[j] = State::AtUpper;
            } else if l.is_finite() {
                x[j] = l;
                state[j] = State::AtLower;
            } else {
                x[j] = 0.0;
                state[j] = State::FreeZero;
            }
        }
        // residual determines the artificial column signs
        let mut resid = b.clone();
        for j in 0..first_art {
            if x[j] != 0.0 {
                for i in 0..m {
                    resid[i] -= a[j * m + i] * x[j];
                }
            }
        }
        let mut basis = Vec::with_capacity(m);
        let mut binv = DMatrix::zeros(m, m);
        for i in 0..m {
            let j = first_art + i;
            let sign = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
            a[j * m + i] = sign;
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x[j] = resid[i].abs();
            state[j] = State::Basic(i);
            basis.push(j);
            binv[(i, i)] = sign;
        }
        let max_iterations = opts
            .max_iterations
            .unwrap_or(20_000 + 50 * (m + ntot));
        Simplex {
            m,
            n_struct: n,
            ntot,
            first_art,
            a,
            b,
            lo,
            hi,
            cost: vec![0.0; ntot],
            x,
            state,
            basis,
            binv,
            opts: opts.clone(),
            iterations: 0,
            max_iterations,
            duals: vec![0.0; m],
        }
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.a[j * self.m..(j + 1) * self.m]
    }

    fn run_phase_one(&mut self) -> Result<()> {
        let mut c = vec![0.0; self.ntot];
        for j in self.first_art..self.ntot {
            c[j] = 1.0;
        }
        self.cost = c;
        self.iterate(true)?;
        let infeas: f64 = (self.first_art..self.ntot).map(|j| self.x[j]).sum();
        let scale = 1.0 + self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeas > self.opts.feasibility_tol * scale {
            return Err(Error::Infeasible(format!(
                "phase one ended with infeasibility {infeas:.3e}"
            )));
        }
        for j in self.first_art..self.ntot {
            self.hi[j] = 0.0;
            if !matches!(self.state[j], State::Basic(_)) {
                self.x[j] = 0.0;
                self.state[j] = State::AtLower;
            }
        }
        Ok(())
    }

    fn run_phase_two(&mut self, lp: &LinearProgram) -> Result<()> {
        let mut c = vec![0.0; self.ntot];
        c[..self.n_struct].copy_from_slice(&lp.cost);
        self.cost = c;
        self.refactor()?;
        self.iterate(false)?;
        self.compute_duals();
        Ok(())
    }

    fn compute_duals(&mut self) {
        let m = self.m;
        for i in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                let cb = self.cost[self.basis[k]];
                if cb != 0.0 {
                    s += cb * self.binv[(k, i)];
                }
            }
            self.duals[i] = s;
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        let col = self.column(j);
        let mut s = self.cost[j];
        for i in 0..self.m {
            s -= self.duals[i] * col[i];
        }
        s
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return Ok(());
        }
        let bmat = DMatrix::from_fn(m, m, |i, k| self.a[self.basis[k] * m + i]);
        let inv = bmat
            .try_inverse()
            .ok_or_else(|| Error::Singular("basis matrix lost rank".into()))?;
        self.binv = inv;
        let mut rhs = self.b.clone();
        for j in 0..self.ntot {
            if !matches!(self.state[j], State::Basic(_)) && self.x[j] != 0.0 {
                let col = &self.a[j * m..(j + 1) * m];
                for i in 0..m {
                    rhs[i] -= col[i] * self.x[j];
                }
            }
        }
        for k in 0..m {
            let mut v = 0.0;
            for i in 0..m {
                v += self.binv[(k, i)] * rhs[i];
            }
            self.x[self.basis[k]] = v;
        }
        Ok(())
    }

    fn iterate(&mut self, phase_one: bool) -> Result<()> {
        let m = self.m;
        let tol = self.opts.optimality_tol;
        let piv_tol = 1e-11;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut since_refactor = 0usize;
        let mut w = vec![0.0; m];
        let mut pricing_start = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::IterationLimit(self.iterations));
            }
            self.compute_duals();

            // pricing; wide programs scan rotating blocks and stop at the
            // first block holding an improving column
            let limit = if phase_one { self.ntot } else { self.first_art };
            let block = if bland || limit <= PARTIAL_PRICING_MIN {
                limit
            } else {
                (limit / 50).max(1000)
            };
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            let mut scanned = 0;
            let mut pos = if block == limit { 0 } else { pricing_start % limit };
            while scanned < limit {
                let j = pos;
                pos += 1;
                if pos == limit {
                    pos = 0;
                }
                scanned += 1;
                let st = self.state[j];
                if !(matches!(st, State::Basic(_)) || self.lo[j] == self.hi[j]) {
                    let d = self.reduced_cost(j);
                    let dir = match st {
                        State::AtLower if d < -tol => 1.0,
                        State::AtUpper if d > tol => -1.0,
                        State::FreeZero if d.abs() > tol => -d.signum(),
                        _ => 0.0,
                    };
                    if dir != 0.0 {
                        if bland {
                            entering = Some((j, dir));
                            break;
                        }
                        if d.abs() > best {
                            best = d.abs();
                            entering = Some((j, dir));
                        }
                    }
                }
                if entering.is_some() && scanned % block == 0 {
                    break;
                }
            }
            pricing_start = pos;
            let Some((j, dir)) = entering else {
                return Ok(());
            };

            // w = B^-1 a_j
            {
                let col = &self.a[j * m..(j + 1) * m];
                for k in 0..m {
                    let mut s = 0.0;
                    for i in 0..m {
                        let ci = col[i];
                        if ci != 0.0 {
                            s += self.binv[(k, i)] * ci;
                        }
                    }
                    w[k] = s;
                }
            }

            // ratio test
            let mut t_best = if self.lo[j].is_finite() && self.hi[j].is_finite() {
                self.hi[j] - self.lo[j]
            } else {
                f64::INFINITY
            };
            let mut leave: Option<usize> = None;
            let mut leave_to_upper = false;
            let mut leave_mag = 0.0;
            for k in 0..m {
                let delta = dir * w[k];
                let bvar = self.basis[k];
                let (t, to_upper) = if delta > piv_tol {
                    if !self.lo[bvar].is_finite() {
                        continue;
                    }
                    (((self.x[bvar] - self.lo[bvar]) / delta).max(0.0), false)
                } else if delta < -piv_tol {
                    if !self.hi[bvar].is_finite() {
                        continue;
                    }
                    (((self.hi[bvar] - self.x[bvar]) / -delta).max(0.0), true)
                } else {
                    continue;
                };
                let tie = (t - t_best).abs() <= 1e-12 * (1.0 + t_best.abs().min(1e12));
                let better = if t < t_best && !tie {
                    true
                } else if tie && leave.is_some() {
                    if bland {
                        bvar < self.basis[leave.unwrap()]
                    } else {
                        delta.abs() > leave_mag
                    }
                } else {
                    tie && leave.is_none() && t <= t_best
                };
                if better {
                    t_best = t;
                    leave = Some(k);
                    leave_to_upper = to_upper;
                    leave_mag = delta.abs();
                }
            }
            if !t_best.is_finite() {
                return Err(Error::Unbounded);
            }

            self.iterations += 1;
            if t_best < 1e-12 {
                degenerate_run += 1;
                if degenerate_run > 10 * m.max(1) {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }

            // move
            if t_best != 0.0 {
                self.x[j] += dir * t_best;
                for k in 0..m {
                    if w[k] != 0.0 {
                        let bv = self.basis[k];
                        self.x[bv] -= dir * t_best * w[k];
                    }
                }
            }
            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.x[j] = self.hi[j];
                        self.state[j] = State::AtUpper;
                    } else {
                        self.x[j] = self.lo[j];
                        self.state[j] = State::AtLower;
                    }
                }
                Some(r) => {
                    let out = self.basis[r];
                    if leave_to_upper {
                        self.x[out] = self.hi[out];
                        self.state[out] = State::AtUpper;
                    } else {
                        self.x[out] = self.lo[out];
                        self.state[out] = State::AtLower;
                    }
                    self.basis[r] = j;
                    self.state[j] = State::Basic(r);
                    let piv = w[r];
                    for c in 0..m {
                        self.binv[(r, c)] /= piv;
                    }
                    for k in 0..m {
                        if k != r && w[k] != 0.0 {
                            let f = w[k];
                            for c in 0..m {
                                let v = self.binv[(r, c)];
                                self.binv[(k, c)] -= f * v;
                            }
                        }
                    }
                    since_refactor += 1;
                    if since_refactor >= 64 {
                        self.refactor()?;
                        since_refactor = 0;
                    }
                }
            }
        }
    }

    fn extract(&mut self, lp: &LinearProgram) -> LpSolution {
        let x: Vec<f64> = (0..self.n_struct)
            .map(|j| self.x[j].clamp(lp.lower[j], lp.upper[j]))
            .collect();
        let objective = x.iter().zip(&lp.cost).map(|(a, b)| a * b).sum();
        LpSolution {
            x,
            objective,
            duals: self.duals.clone(),
            iterations: self.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.set_cost(0, -3.0);
        lp.set_cost(1, -5.0);
        lp.add_row(vec![1.0, 0.0], RowKind::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], RowKind::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], RowKind::Le, 18.0);
        let sol = lp.solve().unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.x[1] - 6.0).abs() < 1e-9);
        assert!((sol.objective + 36.0).abs() < 1e-9);
        // duals: shadow prices 0, -1.5, -1 for the minimization form
        assert!((sol.duals[0]).abs() < 1e-9);
        assert!((sol.duals[1] + 1.5).abs() < 1e-9);
        assert!((sol.duals[2] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows_with_free_variable() {
        // min x + 2y + 0z, x + y + z = 1, z free, z >= -? via x - z >= 0
        let mut lp = LinearProgram::new(3);
        lp.set_cost(0, 1.0);
        lp.set_cost(1, 2.0);
        lp.set_bounds(2, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_row(vec![1.0, 1.0, 1.0], RowKind::Eq, 1.0);
        lp.add_row(vec![1.0, 0.0, -1.0], RowKind::Ge, 0.0);
        let sol = lp.solve().unwrap();
        // x >= z and x + y + z = 1 with y >= 0 -> best is x = z = 0.5, y = 0
        assert!((sol.objective - 0.5).abs() < 1e-9, "{:?}", sol);
        assert!((sol.x[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn bounded_variables_flip() {
        let mut lp = LinearProgram::new(3);
        for j in 0..3 {
            lp.set_cost(j, -((j + 1) as f64));
            lp.set_bounds(j, 0.0, 1.0);
        }
        lp.add_row(vec![1.0, 1.0, 1.0], RowKind::Le, 2.5);
        let sol = lp.solve().unwrap();
        assert!((sol.objective + (3.0 + 2.0 + 0.5)).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_row(vec![1.0], RowKind::Ge, 2.0);
        lp.add_row(vec![1.0], RowKind::Le, 1.0);
        assert!(matches!(lp.solve(), Err(Error::Infeasible(_))));

        let mut lp = LinearProgram::new(1);
        lp.set_cost(0, -1.0);
        assert!(matches!(lp.solve(), Err(Error::Unbounded)));
    }

    #[test]
    fn start_hint_at_upper_is_respected_and_harmless() {
        let mut lp = LinearProgram::new(4);
        for j in 0..4 {
            lp.set_bounds(j, 0.0, 0.5);
            lp.set_cost(j, j as f64);
            lp.start_at_upper(j);
        }
        lp.add_row(vec![1.0; 4], RowKind::Eq, 1.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 0.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_assignment_like_problem() {
        // 3x3 assignment polytope, highly degenerate
        let costs = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let mut lp = LinearProgram::new(9);
        for (j, c) in costs.iter().enumerate() {
            lp.set_cost(j, *c);
        }
        for i in 0..3 {
            lp.add_sparse_row(&[(3 * i, 1.0), (3 * i + 1, 1.0), (3 * i + 2, 1.0)], RowKind::Eq, 1.0);
            lp.add_sparse_row(&[(i, 1.0), (3 + i, 1.0), (6 + i, 1.0)], RowKind::Eq, 1.0);
        }
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 5.0).abs() < 1e-9);
    }
}

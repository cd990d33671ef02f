//! Primal active-set method for small convex quadratic programs
//!
//! ```text
//!   minimize   0.5 p'Hp + g'p
//!   subject to E p = e,   A p <= b
//! ```
//!
//! `H` must be positive definite on the null space of every working set the
//! method visits (in practice: positive definite, or regularized by the
//! caller). The method starts from a feasible point supplied by the caller.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub struct QuadraticProgram {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub eq: Vec<(DVector<f64>, f64)>,
    pub ineq: Vec<(DVector<f64>, f64)>,
}

impl QuadraticProgram {
    /// Solves from the feasible starting point `start`.
    pub fn solve_from(&self, start: DVector<f64>) -> Result<DVector<f64>> {
        let n = self.g.len();
        let feas_tol = 1e-9;
        for (a, b) in &self.eq {
            if (a.dot(&start) - b).abs() > feas_tol * (1.0 + b.abs()) {
                return Err(Error::InvalidInput("QP start violates an equality".into()));
            }
        }
        for (a, b) in &self.ineq {
            if a.dot(&start) - b > feas_tol * (1.0 + b.abs()) {
                return Err(Error::InvalidInput("QP start violates an inequality".into()));
            }
        }

        let mut p = start;
        let mut working: Vec<usize> = Vec::new();
        let max_iter = 50 * (n + self.ineq.len()) + 100;
        for _ in 0..max_iter {
            let (step, mult) = self.eqp(&p, &working)?;
            let step_norm = step.amax();
            if step_norm <= 1e-14 * (1.0 + p.amax()) {
                // multipliers of the inequality part of the working set
                let neq = self.eq.len();
                let mut worst: Option<(usize, f64)> = None;
                for k in 0..working.len() {
                    let lam = mult[neq + k];
                    if lam < -1e-12 && worst.map_or(true, |(_, w)| lam < w) {
                        worst = Some((k, lam));
                    }
                }
                match worst {
                    None => return Ok(p),
                    Some((k, _)) => {
                        working.remove(k);
                        continue;
                    }
                }
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for (i, (a, b)) in self.ineq.iter().enumerate() {
                if working.contains(&i) {
                    continue;
                }
                let ap = a.dot(&step);
                if ap > 1e-14 * (1.0 + a.amax() * step_norm) {
                    let slack = (b - a.dot(&p)).max(0.0);
                    let t = slack / ap;
                    if t < alpha {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            p += alpha * &step;
            if let Some(i) = blocking {
                working.push(i);
            }
        }
        Err(Error::IterationLimit(max_iter))
    }

    /// Equality-constrained step from `p` with the working set active.
    /// Returns the step and the multipliers (equalities first).
    fn eqp(&self, p: &DVector<f64>, working: &[usize]) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.g.len();
        let rows: Vec<&DVector<f64>> = self
            .eq
            .iter()
            .map(|(a, _)| a)
            .chain(working.iter().map(|&i| &self.ineq[i].0))
            .collect();
        let k = rows.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.h);
        for (r, a) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = a[j];
                kkt[(j, n + r)] = a[j];
            }
        }
        let grad = &self.h * p + &self.g;
        let mut rhs = DVector::zeros(n + k);
        for j in 0..n {
            rhs[j] = -grad[j];
        }
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("QP KKT system".into()))?;
        let step = sol.rows(0, n).into_owned();
        let mult = sol.rows(n, k).into_owned();
        Ok((step, mult))
    }
}

//! Lemke's complementary pivoting for the linear complementarity problem
//!
//! ```text
//!   w = M z + q,   w >= 0,   z >= 0,   w'z = 0
//! ```
//!
//! Dense floating-point tableau, covering vector of ones, lexicographic
//! minimum-ratio test. The LCPs solved here come from projection problems
//! with positive semidefinite `M`, for which Lemke never ends on a secondary
//! ray; a ray is still reported as an error instead of panicking.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const RATIO_TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Var {
    W(usize),
    Z(usize),
    Z0,
}

impl Var {
    fn complement(self) -> Var {
        match self {
            Var::W(i) => Var::Z(i),
            Var::Z(i) => Var::W(i),
            Var::Z0 => Var::Z0,
        }
    }
}

struct Tableau {
    n: usize,
    // n rows x (2n + 2) columns: [w block | z block | z0 | rhs]
    t: DMatrix<f64>,
    basis: Vec<Var>,
}

impl Tableau {
    fn new(m: &DMatrix<f64>, q: &DVector<f64>) -> Self {
        let n = q.len();
        let mut t = DMatrix::zeros(n, 2 * n + 2);
        for i in 0..n {
            t[(i, i)] = 1.0;
            for j in 0..n {
                t[(i, n + j)] = -m[(i, j)];
            }
            t[(i, 2 * n)] = -1.0;
            t[(i, 2 * n + 1)] = q[i];
        }
        Tableau {
            n,
            t,
            basis: (0..n).map(Var::W).collect(),
        }
    }

    fn col(&self, v: Var) -> usize {
        match v {
            Var::W(i) => i,
            Var::Z(i) => self.n + i,
            Var::Z0 => 2 * self.n,
        }
    }

    fn rhs(&self, row: usize) -> f64 {
        self.t[(row, 2 * self.n + 1)]
    }

    fn pivot(&mut self, row: usize, entering: Var) {
        let c = self.col(entering);
        let piv = self.t[(row, c)];
        let ncols = self.t.ncols();
        for j in 0..ncols {
            self.t[(row, j)] /= piv;
        }
        for i in 0..self.n {
            if i == row {
                continue;
            }
            let f = self.t[(i, c)];
            if f != 0.0 {
                for j in 0..ncols {
                    let v = self.t[(row, j)];
                    self.t[(i, j)] -= f * v;
                }
            }
        }
        self.basis[row] = entering;
    }

    /// Lexicographic comparison of `(rhs_i, Binv_i) / a_i` against row `k`.
    fn lex_less(&self, i: usize, k: usize, c: usize) -> bool {
        let ai = self.t[(i, c)];
        let ak = self.t[(k, c)];
        let ri = self.rhs(i) / ai;
        let rk = self.rhs(k) / ak;
        let scale = 1.0f64.max(ri.abs()).max(rk.abs());
        if (ri - rk).abs() > RATIO_TIE_TOL * scale {
            return ri < rk;
        }
        for j in 0..self.n {
            let vi = self.t[(i, j)] / ai;
            let vk = self.t[(k, j)] / ak;
            if (vi - vk).abs() > RATIO_TIE_TOL {
                return vi < vk;
            }
        }
        false
    }

    /// Minimum ratio row for an entering column whose basic variables decrease
    /// as `rhs - a t`. Returns `None` on ray termination.
    fn min_ratio(&self, entering: Var) -> Option<usize> {
        let c = self.col(entering);
        let mut best: Option<usize> = None;
        for i in 0..self.n {
            if self.t[(i, c)] <= PIVOT_TOL {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(k) if self.lex_less(i, k, c) => Some(i),
                keep => keep,
            };
        }
        // Prefer letting z0 leave whenever it ties for the minimum ratio.
        if let Some(k) = best {
            let c_ratio = self.rhs(k) / self.t[(k, c)];
            for i in 0..self.n {
                if self.basis[i] == Var::Z0 && self.t[(i, c)] > PIVOT_TOL {
                    let r = self.rhs(i) / self.t[(i, c)];
                    if (r - c_ratio).abs() <= RATIO_TIE_TOL * 1.0f64.max(c_ratio.abs()) {
                        return Some(i);
                    }
                }
            }
        }
        best
    }
}

/// Solves the LCP `(M, q)` and returns `z`.
pub fn solve_lcp(m: &DMatrix<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
    let n = q.len();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "LCP matrix is {}x{} but q has length {n}",
            m.nrows(),
            m.ncols()
        )));
    }
    if q.iter().chain(m.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite LCP data".into()));
    }
    if q.iter().all(|&v| v >= 0.0) {
        return Ok(DVector::zeros(n));
    }

    let mut tab = Tableau::new(m, q);

    // z0 enters; the leaving row is the lexicographically most negative q_i.
    let z0c = tab.col(Var::Z0);
    let mut leave = 0;
    for i in 1..n {
        // column entries are -1 here, so "less" in the lex sense is reversed
        let (ri, rk) = (tab.rhs(i), tab.rhs(leave));
        if ri < rk - RATIO_TIE_TOL * 1.0f64.max(rk.abs())
            || ((ri - rk).abs() <= RATIO_TIE_TOL * 1.0f64.max(rk.abs()) && tab.lex_less(leave, i, z0c))
        {
            leave = i;
        }
    }
    let mut leaving = tab.basis[leave];
    tab.pivot(leave, Var::Z0);

    let max_pivots = 1000 + 100 * n;
    let mut pivots = 1;
    loop {
        let entering = leaving.complement();
        let row = tab.min_ratio(entering).ok_or(Error::RayTermination)?;
        leaving = tab.basis[row];
        tab.pivot(row, entering);
        pivots += 1;
        if leaving == Var::Z0 {
            break;
        }
        if pivots > max_pivots {
            return Err(Error::IterationLimit(pivots));
        }
    }

    let mut z = DVector::zeros(n);
    for (row, var) in tab.basis.iter().enumerate() {
        if let Var::Z(j) = *var {
            z[j] = tab.rhs(row).max(0.0);
        }
    }
    Ok(polish(m, q, z))
}

/// Re-solves the complementary system on the support of `z` to strip
/// accumulated pivoting error. Keeps the pivoted answer when the re-solve
/// is not a valid complementary solution.
fn polish(m: &DMatrix<f64>, q: &DVector<f64>, z: DVector<f64>) -> DVector<f64> {
    let support: Vec<usize> = (0..z.len()).filter(|&i| z[i] > 0.0).collect();
    if support.is_empty() {
        return z;
    }
    let k = support.len();
    let sub = DMatrix::from_fn(k, k, |a, b| m[(support[a], support[b])]);
    let rhs = DVector::from_fn(k, |a, _| -q[support[a]]);
    let Some(sol) = sub.lu().solve(&rhs) else {
        return z;
    };
    if sol.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return z;
    }
    let mut cand = DVector::zeros(z.len());
    for (a, &i) in support.iter().enumerate() {
        cand[i] = sol[a];
    }
    let w = m * &cand + q;
    let scale = 1.0 + q.amax();
    if w.iter().all(|&v| v >= -1e-10 * scale) && residual(m, q, &cand) <= residual(m, q, &z) {
        cand
    } else {
        z
    }
}

fn residual(m: &DMatrix<f64>, q: &DVector<f64>, z: &DVector<f64>) -> f64 {
    let w = m * z + q;
    w.iter()
        .zip(z.iter())
        .map(|(&wi, &zi)| (wi.min(0.0)).abs() + (wi * zi).abs())
        .sum()
}

//! Exact CVaR minimization for elliptical returns, where the loss `-x'Y` is
//! `||Px|| X_1 - x'mu` and the objective `lambda k ||Px|| - m'x` is convex and
//! smooth on the feasible set.

use nalgebra::{DMatrix, DVector};

use crate::distributions::{spherical_cvar, EllipticalDistribution};
use crate::error::{invalid, Error, Result};
use crate::solvers::QuadraticProgram;

use super::problem::{PortfolioProblem, Solution, Status};

const MAX_ITER: usize = 500;

pub fn solve_exact_elliptical(problem: &PortfolioProblem, dist: &EllipticalDistribution) -> Result<Solution> {
    if problem.cardinality.is_some() {
        return invalid("exact elliptical solve needs a continuous problem");
    }
    let d = problem.dim();
    if dist.dim() != d {
        return invalid("distribution and problem dimensions differ");
    }
    let kappa = spherical_cvar(dist.family(), problem.beta)?;
    let lam = problem.lambda();
    let region = problem.region_with_return()?;
    let p = dist.factor();
    let sigma = p.transpose() * p;
    // linear part: lambda * mu_dist + (1 - lambda) * mu_input
    let m = DVector::from_iterator(
        d,
        dist.mu().iter().zip(&problem.mu).map(|(a, b)| lam * a + (1.0 - lam) * b),
    );
    let f = |x: &DVector<f64>| lam * kappa * x.dot(&(&sigma * x)).sqrt() - m.dot(x);

    let mut ineq: Vec<(DVector<f64>, f64)> = region
        .rows()
        .iter()
        .map(|r| (DVector::from_column_slice(&r.coeffs), r.rhs))
        .collect();
    let lo = region.lower();
    let hi: Vec<f64> = region.upper().iter().map(|u| u.min(region.capital())).collect();
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        ineq.push((e.clone(), hi[i]));
        ineq.push((-e, -lo[i]));
    }

    let mut x = DVector::from_column_slice(region.feasible_point());
    let mut fx = f(&x);
    let scale = sigma.diagonal().max().max(1e-300);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let s2 = x.dot(&(&sigma * &x));
        let (g, h) = if s2 > 0.0 && lam > 0.0 {
            let s = s2.sqrt();
            let sx = &sigma * &x;
            let g = &sx * (lam * kappa / s) - &m;
            let h = (&sigma / s - (&sx * sx.transpose()) / (s * s2)) * (lam * kappa);
            (g, h)
        } else {
            (-m.clone(), DMatrix::zeros(d, d))
        };
        let h = h + DMatrix::identity(d, d) * (1e-10 * scale);
        // step constraints: a'(x + p) <= b  ->  a'p <= b - a'x
        let qp = QuadraticProgram {
            h,
            g: g.clone(),
            eq: vec![(DVector::from_element(d, 1.0), 0.0)],
            ineq: ineq.iter().map(|(a, b)| (a.clone(), (b - a.dot(&x)).max(0.0))).collect(),
        };
        let step = qp.solve_from(DVector::zeros(d))?;
        let slope = g.dot(&step);
        let step_norm = step.norm();
        if step_norm <= 1e-13 * (1.0 + x.norm()) || slope >= 0.0 {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x + &step * t;
            let fc = f(&cand);
            // near the optimum f cannot resolve the decrease; trust short Newton steps
            let short = t == 1.0 && step_norm < 1e-6 && fc <= fx + 1e-14 * (1.0 + fx.abs());
            if fc <= fx + 1e-4 * t * slope || short {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::IterationLimit(MAX_ITER));
    }
    let xs: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.clamp(lo[i], hi[i])).collect();
    let stats = dist.loss_stats(&xs, problem.beta)?;
    Ok(Solution {
        objective: problem.objective_value(stats.cvar, &xs),
        expected_return: problem.expected_return(&xs),
        cvar: stats.cvar,
        var: stats.var,
        x: xs,
        z: None,
        status: Status::Optimal,
    })
}

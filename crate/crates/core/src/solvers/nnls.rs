//! Lawson-Hanson active-set method for `min ||A z - b||` subject to `z >= 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least squares on the columns in `passive`, zero elsewhere.
fn restricted_lstsq(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[usize]) -> Option<DVector<f64>> {
    if passive.is_empty() {
        return Some(DVector::zeros(a.ncols()));
    }
    let sub = a.select_columns(passive);
    let s = sub.svd(true, true).solve(b, 1e-13).ok()?;
    let mut z = DVector::zeros(a.ncols());
    for (k, &j) in passive.iter().enumerate() {
        z[j] = s[k];
    }
    Some(z)
}

pub fn solve_nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::InvalidInput(format!("NNLS matrix has {m} rows but b has length {}", b.len())));
    }
    let col_norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let tol = 1e-12 * b.norm().max(1e-300);
    let mut z = DVector::zeros(n);
    let mut passive: Vec<usize> = Vec::new();
    let max_iter = 10 * n + 50;
    let mut iter = 0;
    loop {
        let w = a.transpose() * (b - a * &z);
        let entering = (0..n)
            .filter(|j| !passive.contains(j) && w[*j] > tol * col_norms[*j])
            .max_by(|&i, &j| (w[i] / col_norms[i]).total_cmp(&(w[j] / col_norms[j])));
        let Some(k) = entering else {
            return Ok(z);
        };
        passive.push(k);
        let mut s = restricted_lstsq(a, b, &passive).ok_or_else(|| Error::Singular("NNLS subproblem".into()))?;
        if s[k] <= 0.0 {
            // the entering column is numerically dependent on the passive set
            // and cannot reduce the residual
            return Ok(z);
        }
        while passive.iter().any(|&i| s[i] <= 0.0) {
            iter += 1;
            if iter > max_iter {
                return Err(Error::IterationLimit(iter));
            }
            let mut alpha = 1.0f64;
            for &i in &passive {
                if s[i] <= 0.0 {
                    alpha = alpha.min(z[i] / (z[i] - s[i]));
                }
            }
            z = &z + (&s - &z) * alpha;
            passive.retain(|&i| z[i] > 0.0 && s[i] > 0.0 || z[i] > 1e-14 * z.amax());
            for i in 0..n {
                if !passive.contains(&i) {
                    z[i] = 0.0;
                }
            }
            s = restricted_lstsq(a, b, &passive).ok_or_else(|| Error::Singular("NNLS subproblem".into()))?;
        }
        z = s;
        iter += 1;
        if iter > max_iter {
            return Err(Error::IterationLimit(iter));
        }
    }
}

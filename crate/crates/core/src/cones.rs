//! Convex cones, the conic hull of a budget-constrained portfolio set, and
//! Euclidean projection onto cones through Lemke's algorithm.
//!
//! A [`Cone`] may carry a generator form `{G'l : l >= 0}` (generators are the
//! rows of `G`), a facet form `{x : Bx >= 0}`, or both. Projection onto a
//! generator form solves the LCP `w = GG'l - Gx0`; projection onto a facet
//! form goes through the polar cone, which is generated by the rows of `-B`,
//! and Moreau's decomposition `x0 = p_K(x0) + p_{K°}(x0)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::solvers::{solve_lcp, solve_nnls, LinearProgram, RowKind};

pub const DEFAULT_MEMBER_TOL: f64 = 1e-9;

/// One inequality `coeffs' x <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// Portfolio feasible set: `1'x = capital`, `a_i'x <= b_i`, `lower <= x <= upper`.
#[derive(Clone, Debug, Serialize)]
pub struct FeasibleRegion {
    capital: f64,
    rows: Vec<LinearRow>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(skip)]
    interior_point: Vec<f64>,
}

#[derive(Deserialize)]
struct FeasibleRegionDef {
    dim: usize,
    #[serde(default = "one")]
    capital: f64,
    #[serde(default)]
    rows: Vec<LinearRow>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    quota: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl<'de> Deserialize<'de> for FeasibleRegion {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let def = FeasibleRegionDef::deserialize(de)?;
        let cap = def.quota.unwrap_or(def.capital).min(def.capital);
        let lower = def.lower.unwrap_or_else(|| vec![0.0; def.dim]);
        let upper = def.upper.unwrap_or_else(|| vec![cap; def.dim]);
        FeasibleRegion::new(def.capital, def.rows, lower, upper).map_err(serde::de::Error::custom)
    }
}

impl FeasibleRegion {
    pub fn new(capital: f64, rows: Vec<LinearRow>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = lower.len();
        if d == 0 {
            return invalid("feasible region needs at least one asset");
        }
        if !(capital > 0.0) || !capital.is_finite() {
            return invalid(format!("capital must be positive, got {capital}"));
        }
        if upper.len() != d {
            return invalid("lower and upper bounds differ in length");
        }
        for j in 0..d {
            if !lower[j].is_finite() || lower[j] < 0.0 {
                return invalid(format!("lower bound {j} must be finite and nonnegative"));
            }
            if upper[j].is_nan() || lower[j] > upper[j] {
                return invalid(format!("bounds of asset {j} are inconsistent"));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.coeffs.len() != d {
                return invalid(format!("row {i} has {} coefficients, expected {d}", row.coeffs.len()));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|v| !v.is_finite()) {
                return invalid(format!("row {i} is not finite"));
            }
        }
        let upper = upper.into_iter().map(|u| u.min(capital)).collect();
        let mut region = FeasibleRegion {
            capital,
            rows,
            lower,
            upper,
            interior_point: Vec::new(),
        };
        region.interior_point = region.probe()?;
        Ok(region)
    }

    /// `{x >= 0, 1'x = capital}`.
    pub fn simplex(d: usize, capital: f64) -> Result<Self> {
        Self::new(capital, Vec::new(), vec![0.0; d], vec![capital; d])
    }

    /// Long-only portfolios with every position at most `quota`.
    pub fn with_quota(d: usize, capital: f64, quota: f64) -> Result<Self> {
        if (d as f64) * quota < capital * (1.0 - 1e-12) {
            return Err(Error::Infeasible(format!(
                "quota {quota} with {d} assets cannot hold capital {capital}"
            )));
        }
        Self::new(capital, Vec::new(), vec![0.0; d], vec![quota; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn capital(&self) -> f64 {
        self.capital
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// A feasible point found by the construction-time LP probe.
    pub fn feasible_point(&self) -> &[f64] {
        &self.interior_point
    }

    /// Same region with an extra inequality row.
    pub fn with_row(&self, row: LinearRow) -> Result<Self> {
        let mut rows = self.rows.clone();
        rows.push(row);
        Self::new(self.capital, rows, self.lower.clone(), self.upper.clone())
    }

    /// Intersects the bounds with the box `[lower, upper]`.
    pub fn with_bounds(&self, lower: &[f64], upper: &[f64]) -> Result<Self> {
        let lo = self.lower.iter().zip(lower).map(|(a, b)| a.max(*b)).collect();
        let hi = self.upper.iter().zip(upper).map(|(a, b)| a.min(*b)).collect();
        Self::new(self.capital, self.rows.clone(), lo, hi)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let sum: f64 = x.iter().sum();
        if (sum - self.capital).abs() > tol {
            return false;
        }
        if x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .any(|(v, (l, u))| *v < l - tol || *v > u + tol)
        {
            return false;
        }
        self.rows
            .iter()
            .all(|r| dot(&r.coeffs, x) <= r.rhs + tol)
    }

    /// Builds the LP feasibility system over `x` with the given objective.
    pub(crate) fn to_lp(&self, cost: &[f64]) -> LinearProgram {
        let d = self.dim();
        let mut lp = LinearProgram::new(d);
        for j in 0..d {
            lp.set_bounds(j, self.lower[j], self.upper[j]);
            lp.set_cost(j, cost[j]);
        }
        lp.add_row(vec![1.0; d], RowKind::Eq, self.capital);
        for r in &self.rows {
            lp.add_row(r.coeffs.clone(), RowKind::Le, r.rhs);
        }
        lp
    }

    fn probe(&self) -> Result<Vec<f64>> {
        let lp = self.to_lp(&vec![0.0; self.dim()]);
        match lp.solve() {
            Ok(sol) => Ok(sol.x),
            Err(Error::Infeasible(_)) => Err(Error::Infeasible("feasible region is empty".into())),
            Err(e) => Err(e),
        }
    }

    /// Rows after folding nontrivial bounds in as inequalities
    /// (`x_j <= u_j` for `u_j < c`, `-x_j <= -l_j` for `l_j > 0`).
    pub fn folded_rows(&self) -> Vec<LinearRow> {
        let d = self.dim();
        let mut rows = self.rows.clone();
        for j in 0..d {
            if self.upper[j] < self.capital {
                let mut coeffs = vec![0.0; d];
                coeffs[j] = 1.0;
                rows.push(LinearRow { coeffs, rhs: self.upper[j] });
            }
            if self.lower[j] > 0.0 {
                let mut coeffs = vec![0.0; d];
                coeffs[j] = -1.0;
                rows.push(LinearRow { coeffs, rhs: -self.lower[j] });
            }
        }
        rows
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A convex cone in generator form, facet form, or both.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Cone {
    #[serde(rename = "d")]
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    generators: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    facets: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct ConeDef {
    d: usize,
    generators: Option<Vec<Vec<f64>>>,
    facets: Option<Vec<Vec<f64>>>,
}

impl<'de> Deserialize<'de> for Cone {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let def = ConeDef::deserialize(de)?;
        Cone::new(def.d, def.generators, def.facets).map_err(serde::de::Error::custom)
    }
}

impl Cone {
    pub fn new(
        dim: usize,
        generators: Option<Vec<Vec<f64>>>,
        facets: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if generators.is_none() && facets.is_none() {
            return invalid("a cone needs generators or facets");
        }
        let check = |rows: &Vec<Vec<f64>>, what: &str| -> Result<()> {
            for r in rows {
                if r.len() != dim {
                    return invalid(format!("{what} row has length {}, expected {dim}", r.len()));
                }
                if r.iter().any(|v| !v.is_finite()) {
                    return invalid(format!("{what} row is not finite"));
                }
            }
            Ok(())
        };
        if let Some(g) = &generators {
            check(g, "generator")?;
        }
        if let Some(f) = &facets {
            check(f, "facet")?;
        }
        Ok(Cone {
            dim,
            generators: generators.map(normalize_generators),
            facets: facets.map(|f| f.into_iter().filter(|r| norm(r) > 0.0).collect()),
        })
    }

    pub fn from_generators(dim: usize, generators: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(dim, Some(generators), None)
    }

    pub fn from_facets(dim: usize, facets: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(dim, None, Some(facets))
    }

    /// The nonnegative orthant, in both forms.
    pub fn orthant(dim: usize) -> Self {
        let id: Vec<Vec<f64>> = (0..dim).map(|i| unit(dim, i)).collect();
        Cone {
            dim,
            generators: Some(id.clone()),
            facets: Some(id),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> Option<&[Vec<f64>]> {
        self.generators.as_deref()
    }

    pub fn facets(&self) -> Option<&[Vec<f64>]> {
        self.facets.as_deref()
    }

    /// Polar cone `{y : y'x <= 0 for all x in K}`.
    pub fn polar(&self) -> Cone {
        let neg = |rows: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|v| -v).collect()).collect()
        };
        Cone {
            dim: self.dim,
            generators: self.facets.as_ref().map(|f| normalize_generators(neg(f))),
            facets: self.generators.as_ref().map(neg),
        }
    }

    /// Image `{Px : x in K}` of the cone under an invertible matrix.
    pub fn linear_image(&self, p: &DMatrix<f64>) -> Result<Cone> {
        let d = self.dim;
        if p.nrows() != d || p.ncols() != d {
            return invalid("linear image needs a square matrix of the cone's dimension");
        }
        let generators = self.generators.as_ref().map(|g| {
            g.iter()
                .map(|row| (p * DVector::from_column_slice(row)).iter().copied().collect())
                .collect::<Vec<Vec<f64>>>()
        });
        let facets = match &self.facets {
            None => None,
            Some(f) => {
                let inv = p
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("cone image matrix".into()))?;
                // {Px : Bx >= 0} = {w : B P^-1 w >= 0}
                let b = DMatrix::from_fn(f.len(), d, |i, j| f[i][j]);
                let bt = b * inv;
                Some((0..f.len()).map(|i| bt.row(i).iter().copied().collect()).collect())
            }
        };
        Cone::new(d, generators, facets)
    }

    /// True when the cone lies in the nonnegative orthant.
    pub fn within_orthant(&self) -> bool {
        if let Some(g) = &self.generators {
            if g.iter().all(|r| r.iter().all(|&v| v >= 0.0)) {
                return true;
            }
        }
        if let Some(f) = &self.facets {
            return (0..self.dim).all(|j| {
                f.iter().any(|r| {
                    r[j] > 0.0 && r.iter().enumerate().all(|(k, &v)| k == j || v == 0.0)
                })
            });
        }
        false
    }

    /// Precomputes the LCP data for repeated projections.
    pub fn projector(&self) -> Projector {
        match (&self.generators, &self.facets) {
            (Some(g), _) => Projector::new(self.dim, g, false),
            (None, Some(f)) => {
                let polar = normalize_generators(
                    f.iter().map(|r| r.iter().map(|v| -v).collect()).collect(),
                );
                Projector::new(self.dim, &polar, true)
            }
            (None, None) => unreachable!("cone without representation"),
        }
    }

    pub fn project(&self, x0: &[f64]) -> Result<Vec<f64>> {
        self.projector().project(x0)
    }

    /// Projection through the generator form.
    pub fn project_generators(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let g = self
            .generators
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("cone has no generator form".into()))?;
        Projector::new(self.dim, g, false).project(x0)
    }

    /// Projection through the facet form via the polar cone.
    pub fn project_polyhedral(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let f = self
            .facets
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("cone has no facet form".into()))?;
        let polar = normalize_generators(f.iter().map(|r| r.iter().map(|v| -v).collect()).collect());
        Projector::new(self.dim, &polar, true).project(x0)
    }

    /// Membership test: `min_i B_i x >= -tol` for the facet form, otherwise
    /// `||x - p_K(x)|| <= tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if let Some(f) = &self.facets {
            return f.iter().all(|r| dot(r, x) >= -tol);
        }
        match self.project(x) {
            Ok(p) => dist(&p, x) <= tol,
            Err(_) => false,
        }
    }
}

/// LCP data for projecting onto `cone{rows of G}` (or, in polar mode, onto
/// the polar of that cone through Moreau's decomposition).
#[derive(Clone, Debug)]
pub struct Projector {
    dim: usize,
    gens: DMatrix<f64>,
    gram: DMatrix<f64>,
    polar: bool,
}

impl Projector {
    fn new(dim: usize, rows: &[Vec<f64>], polar: bool) -> Self {
        let gens = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        let gram = &gens * gens.transpose();
        Projector { dim, gens, gram, polar }
    }

    pub fn project(&self, x0: &[f64]) -> Result<Vec<f64>> {
        if x0.len() != self.dim {
            return invalid(format!("point has length {}, expected {}", x0.len(), self.dim));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return invalid("cannot project a non-finite point");
        }
        let x = DVector::from_column_slice(x0);
        let v = if self.gens.nrows() == 0 {
            DVector::zeros(self.dim)
        } else {
            let q = -(&self.gens * &x);
            self.solve(&x, &q)?
        };
        Ok(if self.polar {
            (x - v).iter().copied().collect()
        } else {
            v.iter().copied().collect()
        })
    }

    /// Lemke on the Gram matrix, checked against the optimality conditions
    /// `G(x - v) <= 0`, `v'(x - v) = 0`. Degenerate generator sets (opposite
    /// pairs, or generators spanning the whole space) can stall the pivoting
    /// in floating point; those fall back to nonnegative least squares.
    fn solve(&self, x: &DVector<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
        if let Ok(lam) = solve_lcp(&self.gram, q) {
            let v = self.gens.transpose() * &lam;
            let near = |p: &DVector<f64>| (p - &v).amax() <= 1e-6 * (1.0 + x.amax());
            if let Some(p) = self.polish(x, &lam).filter(|p| near(p) && self.optimal(x, p)) {
                return Ok(p);
            }
            if self.optimal(x, &v) {
                return Ok(v);
            }
        }
        let lam = solve_nnls(&self.gens.transpose(), x)?;
        Ok(self.gens.transpose() * lam)
    }

    /// Exact least-squares fit of `x` on the generators Lemke left active,
    /// which strips pivoting error even when they are linearly dependent.
    fn polish(&self, x: &DVector<f64>, lam: &DVector<f64>) -> Option<DVector<f64>> {
        let support: Vec<usize> = (0..lam.len()).filter(|&i| lam[i] > 0.0).collect();
        if support.is_empty() {
            return None;
        }
        let gs = self.gens.select_rows(&support).transpose();
        let mu = gs.clone().svd(true, true).solve(x, 1e-13).ok()?;
        Some(gs * mu)
    }

    fn optimal(&self, x: &DVector<f64>, v: &DVector<f64>) -> bool {
        let r = x - v;
        let tol = 1e-11 * (1.0 + x.amax());
        (&self.gens * &r).iter().all(|g| *g <= tol) && v.dot(&r).abs() <= tol * (1.0 + v.amax())
    }

    pub fn projected_norm(&self, x0: &[f64]) -> Result<f64> {
        Ok(norm(&self.project(x0)?))
    }
}

/// Conic hull of `{1'x = c, a_i'x <= b_i, lower <= x <= upper}` as the
/// polyhedral cone `{x >= 0 : (b_i/c 1 - a_i)'x >= 0}` with nontrivial bounds
/// folded in as rows. With no rows the generator form (standard basis) is
/// attached as well.
pub fn conic_hull(region: &FeasibleRegion) -> Result<Cone> {
    let d = region.dim();
    let c = region.capital();
    if !(c > 0.0) {
        return invalid("conic hull needs a positive budget");
    }
    let rows = region.folded_rows();
    if rows.is_empty() {
        return Ok(Cone::orthant(d));
    }
    let mut facets: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.coeffs.iter().map(|a| r.rhs / c - a).collect())
        .collect();
    facets.extend((0..d).map(|i| unit(d, i)));
    Cone::from_facets(d, facets)
}

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn normalize_generators(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for r in rows {
        let n = norm(&r);
        if n <= 1e-14 {
            continue;
        }
        let u: Vec<f64> = r.iter().map(|v| v / n).collect();
        let dup = out
            .iter()
            .any(|o| o.iter().zip(&u).all(|(a, b)| (a - b).abs() <= 1e-12));
        if !dup {
            out.push(u);
        }
    }
    out
}

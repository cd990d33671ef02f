//! Weighted discrete scenario sets and their CSV persistence.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Sampled,
    Aggregated,
    File,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Sampled => "sampled",
            Provenance::Aggregated => "aggregated",
            Provenance::File => "file",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(Provenance::Sampled),
            "aggregated" => Ok(Provenance::Aggregated),
            "file" => Ok(Provenance::File),
            other => invalid(format!("unknown provenance '{other}'")),
        }
    }
}

/// Finite distribution `{(y_s, p_s)}` with outcomes stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    dim: usize,
    points: Vec<f64>,
    probs: Vec<f64>,
    pub provenance: Option<Provenance>,
    pub seed: Option<u64>,
    pub labels: Option<Vec<String>>,
}

fn kahan_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let y = x - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

impl ScenarioSet {
    pub fn new(dim: usize, points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("scenario dimension must be positive");
        }
        if points.len() != dim * probs.len() {
            return invalid(format!(
                "{} coordinates do not form {} scenarios of dimension {dim}",
                points.len(),
                probs.len()
            ));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return invalid(format!("scenario {} has a non-finite coordinate", i / dim));
        }
        if let Some(i) = probs.iter().position(|p| !(*p >= 0.0) || !p.is_finite()) {
            return invalid(format!("scenario {i} has invalid weight {}", probs[i]));
        }
        if !probs.is_empty() {
            let total = kahan_sum(probs.iter().copied());
            if (total - 1.0).abs() > PROB_SUM_TOL {
                return invalid(format!("scenario weights sum to {total}, expected 1"));
            }
        }
        Ok(ScenarioSet {
            dim,
            points,
            probs,
            provenance: None,
            seed: None,
            labels: None,
        })
    }

    /// Equally weighted set.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("scenario dimension must be positive");
        }
        let n = points.len() / dim;
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    pub fn empty(dim: usize) -> Self {
        ScenarioSet {
            dim,
            points: Vec::new(),
            probs: Vec::new(),
            provenance: None,
            seed: None,
            labels: None,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance, seed: Option<u64>) -> Self {
        self.provenance = Some(provenance);
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn raw_points(&self) -> &[f64] {
        &self.points
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total_prob(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }

    /// Probability-weighted mean outcome.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (y, p) in self.points().zip(&self.probs) {
            for (mj, yj) in m.iter_mut().zip(y) {
                *mj += p * yj;
            }
        }
        m
    }

    /// Portfolio losses `-x'y_s`.
    pub fn losses(&self, x: &[f64]) -> Vec<f64> {
        self.points()
            .map(|y| -y.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Subset of scenarios, renormalized.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut pts = Vec::with_capacity(idx.len() * self.dim);
        let mut probs = Vec::with_capacity(idx.len());
        for &i in idx {
            pts.extend_from_slice(self.point(i));
            probs.push(self.probs[i]);
        }
        let total = kahan_sum(probs.iter().copied());
        if !(total > 0.0) {
            return invalid("selected scenarios carry no probability");
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(self.dim, pts, probs)
    }

    /// Restriction to a subset of coordinates.
    pub fn columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.dim) {
            return invalid("column selection out of range");
        }
        let mut pts = Vec::with_capacity(self.len() * cols.len());
        for y in self.points() {
            pts.extend(cols.iter().map(|&c| y[c]));
        }
        let mut out = Self::new(cols.len(), pts, self.probs.clone())?;
        out.provenance = self.provenance;
        out.seed = self.seed;
        out.labels = self
            .labels
            .as_ref()
            .map(|l| cols.iter().map(|&c| l[c].clone()).collect());
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        f.write_all(self.to_csv_string().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let mut meta = Vec::new();
        if let Some(p) = self.provenance {
            meta.push(format!("provenance={p}"));
        }
        if let Some(s) = self.seed {
            meta.push(format!("seed={s}"));
        }
        if !meta.is_empty() {
            out.push_str(&format!("# {}\n", meta.join(",")));
        }
        out.push_str("prob");
        for j in 0..self.dim {
            out.push(',');
            match &self.labels {
                Some(l) => out.push_str(&l[j]),
                None => out.push_str(&format!("y{}", j + 1)),
            }
        }
        out.push('\n');
        for (y, p) in self.points().zip(&self.probs) {
            out.push_str(&format!("{p:?}"));
            for v in y {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut provenance = None;
        let mut seed = None;
        let mut header: Option<Vec<String>> = None;
        let mut dim = 0;
        let mut points = Vec::new();
        let mut probs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split(',') {
                    let Some((k, v)) = kv.split_once('=') else { continue };
                    match k.trim() {
                        "provenance" => {
                            provenance = Some(v.trim().parse().map_err(|_| Error::Parse {
                                line: line_no,
                                msg: format!("unknown provenance '{}'", v.trim()),
                            })?)
                        }
                        "seed" => {
                            seed = Some(v.trim().parse().map_err(|_| Error::Parse {
                                line: line_no,
                                msg: format!("bad seed '{}'", v.trim()),
                            })?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match &header {
                None => {
                    if fields[0] != "prob" || fields.len() < 2 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "header must start with 'prob' followed by asset columns".into(),
                        });
                    }
                    dim = fields.len() - 1;
                    header = Some(fields[1..].iter().map(|s| s.to_string()).collect());
                }
                Some(_) => {
                    if fields.len() != dim + 1 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("expected {} fields, found {}", dim + 1, fields.len()),
                        });
                    }
                    let mut vals = Vec::with_capacity(dim + 1);
                    for f in &fields {
                        let v: f64 = f.parse().map_err(|_| Error::Parse {
                            line: line_no,
                            msg: format!("'{f}' is not a number"),
                        })?;
                        if !v.is_finite() {
                            return Err(Error::Parse { line: line_no, msg: format!("'{f}' is not finite") });
                        }
                        vals.push(v);
                    }
                    if vals[0] < 0.0 {
                        return Err(Error::Parse { line: line_no, msg: format!("negative weight {}", vals[0]) });
                    }
                    probs.push(vals[0]);
                    points.extend_from_slice(&vals[1..]);
                }
            }
        }
        let Some(labels) = header else {
            return Err(Error::Parse { line: 1, msg: "missing header".into() });
        };
        if probs.is_empty() {
            return Err(Error::Parse { line: 2, msg: "no scenarios".into() });
        }
        let mut set = Self::new(dim, points, probs)?;
        set.provenance = provenance.or(Some(Provenance::File));
        set.seed = seed;
        set.labels = Some(labels);
        Ok(set)
    }
}

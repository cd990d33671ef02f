//! Monthly asset-return tables: a header row of tickers and one row of
//! decimal returns per period.

use std::path::Path;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnsTable {
    pub tickers: Vec<String>,
    /// Row-major, one row per period.
    pub rows: Vec<Vec<f64>>,
}

impl ReturnsTable {
    pub fn new(tickers: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if tickers.is_empty() {
            return invalid("returns table has no assets");
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != tickers.len() {
                return invalid(format!("row {i} has {} values, expected {}", r.len(), tickers.len()));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return invalid(format!("row {i} has a non-finite value"));
            }
        }
        Ok(ReturnsTable { tickers, rows })
    }

    pub fn dim(&self) -> usize {
        self.tickers.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .comment(Some(b'#'))
            .from_path(path)?;
        Self::read(rdr)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        Self::read(rdr)
    }

    fn read<R: std::io::Read>(mut rdr: csv::Reader<R>) -> Result<Self> {
        let tickers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() != tickers.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, found {}", tickers.len(), rec.len()),
                });
            }
            let mut row = Vec::with_capacity(rec.len());
            for (j, f) in rec.iter().enumerate() {
                if f.is_empty() {
                    return Err(Error::Parse { line, msg: format!("missing value for {}", tickers[j]) });
                }
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Parse { line, msg: format!("'{f}' is not a number") })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line, msg: format!("missing value for {}", tickers[j]) });
                }
                row.push(v);
            }
            rows.push(row);
        }
        Self::new(tickers, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.tickers.join(",");
        out.push('\n');
        for r in &self.rows {
            let vals: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&vals.join(","));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Restriction to a subset of assets.
    pub fn columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.dim()) {
            return invalid("column selection out of range");
        }
        Self::new(
            cols.iter().map(|&c| self.tickers[c].clone()).collect(),
            self.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
        )
    }
}

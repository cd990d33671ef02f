//! Output files. Every file starts with a provenance record (build, master
//! seed, config hash) and is written to a temporary name first, then renamed.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::config::RawConfig;
use crate::{CliError, CliResult, CommonArgs, GIT_DESCRIBE};

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
}

pub struct RunContext {
    pub out: PathBuf,
    pub seed: u64,
    pub meta: Meta,
    started: Instant,
    timings: Mutex<Vec<(String, f64)>>,
}

impl RunContext {
    pub fn new(args: &CommonArgs, raw: &RawConfig) -> CliResult<Self> {
        std::fs::create_dir_all(&args.out)?;
        Ok(RunContext {
            out: args.out.clone(),
            seed: args.seed,
            meta: Meta {
                version: GIT_DESCRIBE.to_string(),
                seed: args.seed,
                config_sha256: raw.sha256.clone(),
            },
            started: Instant::now(),
            timings: Mutex::new(Vec::new()),
        })
    }

    pub fn header_line(&self) -> String {
        format!(
            "# riskagg version={} master_seed={} config_sha256={}",
            self.meta.version, self.meta.seed, self.meta.config_sha256
        )
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Records a wall-clock timing; timings go to their own file so numeric
    /// outputs stay reproducible.
    pub fn time(&self, label: impl Into<String>, secs: f64) {
        self.timings.lock().expect("timings lock").push((label.into(), secs));
    }

    pub fn write_table(&self, name: &str, table: &Table) -> CliResult<()> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&table.header).map_err(csv_err)?;
        for row in &table.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        let mut text = self.header_line().into_bytes();
        text.push(b'\n');
        text.extend_from_slice(&body);
        write_atomic(&self.path(name), &text)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, data: &T) -> CliResult<()> {
        let doc = serde_json::json!({ "meta": self.meta, "data": data });
        let mut text = serde_json::to_string_pretty(&doc).expect("output serializes");
        text.push('\n');
        write_atomic(&self.path(name), text.as_bytes())
    }

    /// JSON lines with the provenance record as the first line.
    pub fn write_jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> CliResult<()> {
        let mut text = serde_json::to_string(&serde_json::json!({ "meta": self.meta })).expect("meta serializes");
        text.push('\n');
        for r in records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        write_atomic(&self.path(name), text.as_bytes())
    }

    pub fn write_text(&self, name: &str, body: &str) -> CliResult<()> {
        write_atomic(&self.path(name), body.as_bytes())
    }

    /// Writes `timings.json`.
    pub fn finish(&self) -> CliResult<()> {
        let timings = self.timings.lock().expect("timings lock");
        let entries: Vec<_> = timings
            .iter()
            .map(|(k, v)| serde_json::json!({ "label": k, "seconds": v }))
            .collect();
        let doc = serde_json::json!({
            "meta": self.meta,
            "total_seconds": self.started.elapsed().as_secs_f64(),
            "timings": entries,
        });
        write_atomic(&self.path("timings.json"), serde_json::to_string_pretty(&doc).expect("json").as_bytes())
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// A CSV table held as strings.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn cell(v: impl Display) -> String {
    v.to_string()
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

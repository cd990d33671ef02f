//! Projects the configured points onto a cone. Results go to stdout as JSON
//! lines and to `project.jsonl`; per-point timings go to stderr.

use std::time::Instant;

use serde::Serialize;

use crate::config::ProjectConfig;
use crate::{CliError, CliResult, RunContext};

#[derive(Serialize)]
struct Record<'a> {
    point: &'a [f64],
    projection: Vec<f64>,
    norm: f64,
}

pub fn run(ctx: &RunContext, cfg: ProjectConfig) -> CliResult<()> {
    let d = cfg.cone.dim();
    let projector = cfg.cone.projector();
    let mut records = Vec::with_capacity(cfg.points.len());
    println!("{}", serde_json::json!({ "meta": ctx.meta }));
    for (i, p) in cfg.points.iter().enumerate() {
        if p.len() != d {
            return Err(CliError::Config(format!("point {i} has {} coordinates, cone has {d}", p.len())));
        }
        let started = Instant::now();
        let projection = projector.project(p)?;
        let elapsed = started.elapsed().as_secs_f64();
        let norm = projection.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rec = Record { point: p, projection, norm };
        println!("{}", serde_json::to_string(&rec).expect("record serializes"));
        eprintln!("point {i}: {:.1} us", elapsed * 1e6);
        ctx.time(format!("project point {i}"), elapsed);
        records.push(rec);
    }
    ctx.write_jsonl("project.jsonl", &records)
}

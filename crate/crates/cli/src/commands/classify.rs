//! Risk/non-risk classification of configured points. Results go to stdout
//! as JSON lines and to `classify.jsonl`.

use std::time::Instant;

use serde::Serialize;

use riskagg::cones::FeasibleRegion;
use riskagg::distributions::ScenarioSet;
use riskagg::risk_region::RiskRegion;

use crate::config::{check_beta, ClassifyConfig};
use crate::source::elliptical_from_covariance;
use crate::{CliError, CliResult, RunContext};

#[derive(Serialize)]
struct Record {
    point: Vec<f64>,
    risk: bool,
    margin: f64,
}

pub fn run(ctx: &RunContext, cfg: ClassifyConfig) -> CliResult<()> {
    check_beta(cfg.beta)?;
    let dist = elliptical_from_covariance(cfg.family, cfg.mu.clone(), &cfg.covariance)?;
    let d = dist.dim();
    let region = match cfg.region {
        Some(r) => r,
        None => FeasibleRegion::simplex(d, 1.0)?,
    };
    if region.dim() != d {
        return Err(CliError::Config("region and distribution dimensions differ".into()));
    }
    let rr = RiskRegion::from_region(dist, &region, cfg.beta)?;
    let mut points = cfg.points.clone();
    if let Some(path) = &cfg.points_file {
        let set = ScenarioSet::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        points.extend(set.points().map(<[f64]>::to_vec));
    }
    println!("{}", serde_json::json!({ "meta": ctx.meta, "threshold": rr.threshold() }));
    let started = Instant::now();
    let mut records = Vec::with_capacity(points.len());
    for (i, p) in points.into_iter().enumerate() {
        if p.len() != d {
            return Err(CliError::Config(format!("point {i} has {} coordinates, expected {d}", p.len())));
        }
        let margin = rr.risk_margin(&p)?;
        let rec = Record { risk: rr.is_risk(&p)?, margin, point: p };
        println!("{}", serde_json::to_string(&rec).expect("record serializes"));
        records.push(rec);
    }
    let elapsed = started.elapsed().as_secs_f64();
    eprintln!("classified {} points in {:.3} ms", records.len(), elapsed * 1e3);
    ctx.time("classify", elapsed);
    ctx.write_jsonl("classify.jsonl", &records)
}

pub mod case_study;
pub mod classify;
pub mod project;
pub mod prob_table;
pub mod reduction_error;
pub mod stability;
pub mod synth_data;

use riskagg::cones::FeasibleRegion;

use crate::{CliError, CliResult};

/// Long-only budget region with per-asset quota `q` (no quota when `q >= 1`).
pub(crate) fn quota_region(d: usize, q: f64) -> CliResult<FeasibleRegion> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(CliError::Config(format!("quota must be positive, got {q}")));
    }
    if (d as f64) * q < 1.0 - 1e-12 {
        return Err(CliError::Config(format!(
            "quota {q} is infeasible for {d} assets: d * q must be at least the capital 1"
        )));
    }
    Ok(if q >= 1.0 {
        FeasibleRegion::simplex(d, 1.0)?
    } else {
        FeasibleRegion::with_quota(d, 1.0, q)?
    })
}

//! Writes a factor-model returns table and a skewed heavy-tailed scenario
//! file for desk-scale experiments.

use riskagg::distributions::{fit_from_returns, Family};
use riskagg::rng::derive_seed;
use riskagg::synthetic::{factor_model_returns, skewed_scenarios, FactorModel};

use crate::config::SynthDataConfig;
use crate::source::STREAM_DATA;
use crate::{CliError, CliResult, RunContext};

const STREAM_SCENARIOS: u64 = 102;

pub fn run(ctx: &RunContext, cfg: SynthDataConfig) -> CliResult<()> {
    if let Some(r) = &cfg.returns {
        // same stream as a `synthetic` source with this seed
        let table = factor_model_returns(&r.model, derive_seed(ctx.seed, &[STREAM_DATA]))?;
        let body = format!("{}\n{}", ctx.header_line(), table.to_csv_string());
        ctx.write_text(&r.file, &body)?;
    }
    if let Some(s) = &cfg.scenarios {
        if s.d == 0 || s.n == 0 {
            return Err(CliError::Config("scenario dimension and count must be positive".into()));
        }
        let model = match &cfg.returns {
            Some(r) if r.model.assets >= s.d => r.model.clone(),
            _ => FactorModel { assets: s.d.max(FactorModel::default().assets), ..FactorModel::default() },
        };
        let table = factor_model_returns(&model, derive_seed(ctx.seed, &[STREAM_DATA]))?;
        let cols: Vec<usize> = (0..s.d).collect();
        let fit = fit_from_returns(&table.columns(&cols)?, Family::Normal)?;
        let mut set = skewed_scenarios(
            fit.mu(),
            fit.factor(),
            s.delta,
            s.nu,
            s.n,
            derive_seed(ctx.seed, &[STREAM_SCENARIOS]),
        )?;
        set.labels = Some(cols.iter().map(|&i| table.tickers[i].clone()).collect());
        let body = format!("{}\n{}", ctx.header_line(), set.to_csv_string());
        ctx.write_text(&s.file, &body)?;
    }
    Ok(())
}

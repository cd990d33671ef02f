//! Experiment driver for risk-region scenario generation: non-risk
//! probability tables, stability and reduction-error experiments, the
//! ghost-constraint case study and a few debugging queries.
//!
//! Every experiment reads a JSON config, derives all randomness from the
//! master seed and writes CSV/JSON files whose first line records the build,
//! the seed and a SHA-256 hash of the canonical config.

pub mod commands;
pub mod config;
pub mod output;
pub mod source;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use output::RunContext;

/// Build identifier embedded in every output file.
pub const GIT_DESCRIBE: &str = env!("RISKAGG_GIT_DESCRIBE");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(riskagg::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<riskagg::Error> for CliError {
    fn from(e: riskagg::Error) -> Self {
        use riskagg::Error as E;
        match e {
            E::InvalidInput(_) | E::Parse { .. } | E::Io(_) | E::Csv(_) => CliError::Config(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "riskagg", version, about = "Risk-region scenario generation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON config file; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo non-risk probabilities over dimensions, quotas and beta
    ProbTable(CommonArgs),
    /// Optimality gaps of aggregation sampling against basic sampling
    Stability(CommonArgs),
    /// Error induced by aggregation reduction of sampled sets
    ReductionError(CommonArgs),
    /// SAA with and without aggregation and ghost constraints
    CaseStudy(CommonArgs),
    /// Project points onto a cone
    Project(CommonArgs),
    /// Classify points as risk or non-risk
    Classify(CommonArgs),
    /// Write a synthetic returns table and a skewed scenario file
    SynthData(CommonArgs),
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::ProbTable(a)
            | Command::Stability(a)
            | Command::ReductionError(a)
            | Command::CaseStudy(a)
            | Command::Project(a)
            | Command::Classify(a)
            | Command::SynthData(a) => a,
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let args = cli.command.common().clone();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        // a second initialization (tests calling run twice) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let raw = config::RawConfig::load(args.config.as_deref())?;
    let ctx = RunContext::new(&args, &raw)?;
    match &cli.command {
        Command::ProbTable(_) => commands::prob_table::run(&ctx, raw.parse()?),
        Command::Stability(_) => commands::stability::run(&ctx, raw.parse()?),
        Command::ReductionError(_) => commands::reduction_error::run(&ctx, raw.parse()?),
        Command::CaseStudy(_) => commands::case_study::run(&ctx, raw.parse()?),
        Command::Project(_) => commands::project::run(&ctx, raw.parse()?),
        Command::Classify(_) => commands::classify::run(&ctx, raw.parse()?),
        Command::SynthData(_) => commands::synth_data::run(&ctx, raw.parse()?),
    }?;
    ctx.finish()
}

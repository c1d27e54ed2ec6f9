//! `hjp` command-line driver.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult, EXIT_CONFIG};

#[derive(Parser, Debug)]
#[command(name = "hjp", version, about = "Hawkes clustered-jump model toolkit")]
pub struct Cli {
    /// JSON run configuration; omitted fields take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the relative tolerance of the pricing quadrature.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a path under the statistical measure.
    Simulate(SimulateArgs),
    /// Detect jumps and fit the model to a return series.
    Estimate(EstimateArgs),
    /// Fit volatility and risk-premium parameters to an option quote slice.
    Calibrate(CalibrateArgs),
    /// Price options on a maturity by strike grid.
    Price(PriceArgs),
    /// Jump risk premia along the filtered intensity path of an event file.
    Premia(PremiaArgs),
    /// Time-change goodness-of-fit residuals for an event file.
    Gof(GofArgs),
    /// OLS with Newey-West standard errors on columns of a CSV file.
    Analyze(AnalyzeArgs),
    /// Estimation, intensity filtering, calibration and premia in one run.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// Horizon in years.
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the jump events (t,size,sign) here.
    #[arg(long)]
    pub events_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RiskArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub chi_plus: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub chi_minus: f64,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Statistical parameters (a params file or an `estimate` output).
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub quotes: PathBuf,
    #[arg(long)]
    pub spot: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PriceArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub risk: RiskArgs,
    #[arg(long)]
    pub spot: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub rate: f64,
    /// Comma-separated maturities in years.
    #[arg(long, value_delimiter = ',', required = true)]
    pub maturities: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub strikes: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PremiaArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[command(flatten)]
    pub risk: RiskArgs,
    /// Event file with columns t,size,sign.
    #[arg(long)]
    pub events: PathBuf,
    /// Horizon in years; defaults to the last event time.
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GofArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    /// Intervals closing after this time are flagged out-of-sample.
    #[arg(long)]
    pub split: Option<f64>,
    /// `.json` for the full report, otherwise CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// CSV with named numeric columns.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub y: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub x: Vec<String>,
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long)]
    pub lag: Option<usize>,
    /// First-difference every column before regressing.
    #[arg(long)]
    pub difference: bool,
    /// Adds a `carry` column from `futures,spot,tau` column names.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub carry: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    pub returns: PathBuf,
    #[arg(long)]
    pub quotes: PathBuf,
    #[arg(long)]
    pub spot: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rate: Option<f64>,
    /// Output directory for fit.json, calibration.json and premia.csv.
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("HJP_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::config(format!("HJP_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match configure_threads().and_then(|_| commands::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class.exit_code() as u8)
        }
    }
}

//! Command-line front end: `solve`, `sweep`, `simulate` and `gen-trace`.
//!
//! Parameters come from flags, then from an optional `--config` file of
//! `key = value` lines, then from the built-in defaults. All outputs are CSV
//! and begin with a `# manifest <sha256>` line identifying the resolved
//! parameters.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<farmrev_core::Error> for CliError {
    fn from(e: farmrev_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "farmrev", version, about = "Revenue-maximising server allocation for a two-class server farm")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one policy at one operating point and print a CSV row.
    Solve(SolveArgs),
    /// Sweep one parameter over a range for several policies and models.
    Sweep(SweepArgs),
    /// Simulate policies over an arrival-rate trace.
    Simulate(SimulateArgs),
    /// Write a synthetic hourly arrival-rate trace.
    GenTrace(GenTraceArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// File of `key = value` lines; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EconArgs {
    /// Premium charge, $ per server-hour [default: 0.03]
    #[arg(long)]
    c1: Option<f64>,
    /// Basic charge, $ per server-hour [default: 0.085]
    #[arg(long)]
    c2: Option<f64>,
    /// Penalty per lost premium job, $ [default: 0.2]
    #[arg(long)]
    d: Option<f64>,
    /// Electricity price, $ per kWh [default: 0.1]
    #[arg(long)]
    r: Option<f64>,
    /// Idle server power, W [default: 59]
    #[arg(long)]
    e1: Option<f64>,
    /// Fully busy server power, W [default: 83.5]
    #[arg(long)]
    e2: Option<f64>,
    /// Power usage effectiveness [default: 1.7]
    #[arg(long)]
    pue: Option<f64>,
    /// CPU share a running job uses [default: 0.7]
    #[arg(long = "cpu-util")]
    cpu_util: Option<f64>,
    /// Indirect costs as a multiple of the electricity cost [default: 0]
    #[arg(long = "indirect-multiplier")]
    indirect_multiplier: Option<f64>,
    /// Round the busy-server count up when computing power
    #[arg(long = "ceiling-power")]
    ceiling_power: bool,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// Revenue model: isolated or overflow [default: overflow]
    #[arg(long)]
    model: Option<String>,
    /// Premium blocking target for penalty-capping [default: 1e-5]
    #[arg(long)]
    tau: Option<f64>,
    /// Forecast-error percentile for the percentile policies [default: 0.95]
    #[arg(long = "percentile-x")]
    percentile_x: Option<f64>,
}

#[derive(Debug, Args)]
struct LoadArgs {
    /// Total servers [default: 1000]
    #[arg(long = "S", visible_alias = "servers")]
    servers: Option<u32>,
    /// Premium offered load, Erlangs [default: 300]
    #[arg(long)]
    rho1: Option<f64>,
    /// Basic offered load, Erlangs [default: 250]
    #[arg(long)]
    rho2: Option<f64>,
    /// Service rate, jobs per hour (1 / mean job length) [default: 0.4]
    #[arg(long)]
    mu: Option<f64>,
    /// Forecast inflation used by the percentile policies [default: 0.11]
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// optimal, isolated, penalty-capping, percentile, percentile-optimal,
    /// always-on or exhaustive [default: optimal]
    #[arg(long)]
    policy: Option<String>,
    #[command(flatten)]
    load: LoadArgs,
    #[command(flatten)]
    econ: EconArgs,
    #[command(flatten)]
    policy_args: PolicyArgs,
    /// Write the row to this file (and its manifest beside it) instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Parameter to sweep: d, r, c1, c2, e1, e2, pue, cpu_util,
    /// indirect_multiplier, rho1, rho2, mu or tau [default: d]
    #[arg(long)]
    param: Option<String>,
    /// First value [default: 0]
    #[arg(long)]
    from: Option<f64>,
    /// Last value (inclusive) [default: 5]
    #[arg(long)]
    to: Option<f64>,
    /// Step between values [default: 0.1]
    #[arg(long)]
    step: Option<f64>,
    /// Comma-separated policy names [default: optimal]
    #[arg(long)]
    policies: Option<String>,
    /// Comma-separated models [default: overflow]
    #[arg(long)]
    models: Option<String>,
    #[command(flatten)]
    load: LoadArgs,
    #[command(flatten)]
    econ: EconArgs,
    #[command(flatten)]
    policy_args: PolicyArgs,
    /// Output CSV file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Input trace (`hour,lambda1,lambda2`).
    #[arg(long, value_name = "PATH")]
    trace: PathBuf,
    /// Comma-separated policies; `fixed:N1:N2` pins an allocation
    /// [default: optimal,penalty-capping,percentile,always-on,isolated]
    #[arg(long)]
    policies: Option<String>,
    /// Total servers [default: 1000]
    #[arg(long = "S", visible_alias = "servers")]
    servers: Option<u32>,
    /// Service rate, jobs per hour [default: 0.4]
    #[arg(long)]
    mu: Option<f64>,
    /// Hours between policy invocations [default: 2]
    #[arg(long = "epoch-length")]
    epoch_length: Option<f64>,
    /// exponential, deterministic, lognormal or lognormal:SIGMA [default: exponential]
    #[arg(long)]
    service: Option<String>,
    /// Farm routing: overflow or isolated [default: overflow]
    #[arg(long)]
    routing: Option<String>,
    /// Random seed [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Hours left out of the summary [default: 24]
    #[arg(long)]
    warmup: Option<f64>,
    #[command(flatten)]
    econ: EconArgs,
    #[command(flatten)]
    policy_args: PolicyArgs,
    /// Directory for epochs.csv, summary.csv and manifest.json.
    #[arg(long = "out-dir", value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct GenTraceArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Length in days [default: 30]
    #[arg(long)]
    days: Option<u32>,
    /// Premium base rate, jobs/hour [default: 120]
    #[arg(long)]
    base1: Option<f64>,
    /// Basic base rate, jobs/hour [default: 100]
    #[arg(long)]
    base2: Option<f64>,
    /// Relative amplitude of the daily cycle [default: 0.3]
    #[arg(long = "daily-amp")]
    daily_amp: Option<f64>,
    /// Relative amplitude of the weekly cycle [default: 0.1]
    #[arg(long = "weekly-amp")]
    weekly_amp: Option<f64>,
    /// Coefficient of variation of the hourly noise [default: 0.05]
    #[arg(long = "noise-cv")]
    noise_cv: Option<f64>,
    /// Probability that an hour carries a spike [default: 0.005]
    #[arg(long = "spike-prob")]
    spike_prob: Option<f64>,
    /// Relative size of a spike [default: 0.5]
    #[arg(long = "spike-mult")]
    spike_mult: Option<f64>,
    /// Random seed [default: 7]
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Solve(a) => commands::solve(a, stdout),
        Command::Sweep(a) => commands::sweep(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::GenTrace(a) => commands::gen_trace(a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("Run `farmrev --help` for usage.");
            }
            e.exit_code()
        }
    }
}

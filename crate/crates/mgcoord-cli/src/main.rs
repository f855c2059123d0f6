//! Command-line front end for coordinated QP experiments.
//!
//! Subcommands: `solve` (centralized oracle), `gs` (coordination trace),
//! `spectrum` (convergence certificate), `experiment` (multi-variant traces
//! with an SVG chart). Configuration comes from a JSON document; command-line
//! flags override config fields. Exit codes: 0 success, 1 numerical failure,
//! 2 usage or config error.

mod commands;
mod config;
mod svg;
mod trace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::CliError;

#[derive(Parser)]
#[command(name = "mgcoord", version, about = "Coordinated QP solver harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem centrally and write the solution JSON.
    Solve(CommonArgs),
    /// Run Gauss-Seidel coordination and write an error-trace CSV.
    Gs(GsArgs),
    /// Certify convergence of the configured (case, ordering) pair.
    Spectrum(CommonArgs),
    /// Run every configured variant and write a combined CSV plus SVG chart.
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Case name: temporal, spatial, or custom.
    #[arg(long)]
    case: Option<String>,
    /// Coordination order: lexicographic, reverse-lexicographic,
    /// forward-backward, red-black, spiral, disturbance.
    #[arg(long)]
    ordering: Option<String>,
    /// Stopping tolerance on the step-difference infinity norm.
    #[arg(long)]
    tol: Option<f64>,
    /// Sweep budget.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Initialize from the prolonged solution of a coarse problem at this
    /// resolution (defaults to 4 when the flag is given bare).
    #[arg(long, num_args = 0..=1, default_missing_value = "4")]
    warm_start: Option<usize>,
    /// Multi-level schedule of coarse resolutions, e.g. "1,2,4,5".
    #[arg(long)]
    schedule: Option<String>,
    /// Record wall-clock times per step. Off by default so that reruns are
    /// byte-identical.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Combined trace CSV path.
    #[arg(long, default_value = "experiment.csv")]
    out_csv: PathBuf,
    /// Error-vs-step chart path.
    #[arg(long, default_value = "experiment.svg")]
    out_svg: PathBuf,
    /// Record wall-clock times per step.
    #[arg(long)]
    timing: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => config::resolve(&args, None, None)
            .and_then(|r| commands::cmd_solve(&r, args.output.as_deref())),
        Command::Gs(args) => {
            config::resolve(&args.common, args.warm_start, args.schedule.as_deref())
                .and_then(|r| commands::cmd_gs(&r, args.common.output.as_deref(), args.timing))
        }
        Command::Spectrum(args) => config::resolve(&args, None, None)
            .and_then(|r| commands::cmd_spectrum(&r, args.output.as_deref())),
        Command::Experiment(args) => config::resolve(&args.common, None, None)
            .and_then(|r| commands::cmd_experiment(&r, &args.out_csv, &args.out_svg, args.timing)),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = match &err {
                CliError::Config(_) => ("config", 2),
                CliError::Numerical(_) => ("numerical", 1),
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": err.to_string(), "kind": kind })
            );
            ExitCode::from(code)
        }
    }
}

//! `fairsim` — synthetic recruitment experiments from the command line.
//!
//! Subcommands cover the full workflow: `generate` exports one cell's
//! simulated dataset, `calibrate` re-runs a hyperparameter protocol, `run`
//! executes the sweep, `analyze` aggregates the results, and `plot` renders
//! the SVG figures. Exit codes: 0 success, 1 runtime failure, 2 invalid
//! configuration or file schema.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{CellSpec, CliError, Preset};

#[derive(Parser)]
#[command(
    name = "fairsim",
    version,
    about = "Simulates recruitment under biased rankings, trains classifiers on \
             complete and anonymized files, and renders the comparison figures."
)]
struct Cli {
    /// TOML config file overriding the preset field by field.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (default `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Base experiment design the config file and flags then modify.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Paper)]
    preset: Preset,

    /// Master seed override.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one grid cell's simulated dataset (replicate 0) as CSV files.
    Generate {
        /// Restrict to one cell: `scenario,alpha,bias`
        /// (e.g. `threshold-binary,0.2,0.8`).
        #[arg(long, value_name = "CELL")]
        cell: Option<CellSpec>,
    },
    /// Re-run a hyperparameter calibration protocol and report the outcome
    /// distribution.
    Calibrate {
        /// Which protocol to run.
        #[arg(long, value_enum)]
        protocol: Protocol,
        /// Number of independently simulated matrices.
        #[arg(long, default_value_t = 100, value_name = "N")]
        matrices: usize,
    },
    /// Execute the experiment sweep and write results, diagnostics, and the
    /// run manifest.
    Run {
        /// Restrict to one cell: `scenario,alpha,bias`.
        #[arg(long, value_name = "CELL")]
        cell: Option<CellSpec>,
    },
    /// Aggregate results into summary tables and confidence-ellipse fits.
    Analyze,
    /// Render SVG figures from the aggregated tables.
    Plot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    /// Tune the neighbor count, doubling the search range until it is
    /// interior.
    Knn,
    /// Tune the hidden-layer size and weight decay jointly.
    Mlp,
    /// Compare kernels for the support vector machine.
    SvmKernel,
}

impl Protocol {
    fn name(self) -> &'static str {
        match self {
            Protocol::Knn => "knn",
            Protocol::Mlp => "mlp",
            Protocol::SvmKernel => "svm-kernel",
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let settings =
        config::resolve(cli.preset, cli.config.as_deref(), cli.out.as_deref(), cli.seed)?;
    config::init_threads(settings.threads);
    match cli.command {
        Command::Generate { cell } => commands::cmd_generate(settings, cell),
        Command::Calibrate { protocol, matrices } => {
            commands::cmd_calibrate(settings, protocol.name(), matrices)
        }
        Command::Run { cell } => commands::cmd_run(settings, cell),
        Command::Analyze => commands::cmd_analyze(settings),
        Command::Plot => commands::cmd_plot(settings),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fairsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

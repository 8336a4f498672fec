//! Batch front end: validated JSON configurations in, stamped artifacts out.
//!
//! ```text
//! cavityband <command> --config <file> [--out <dir>] [--workers N] [--no-plots]
//! ```
//!
//! Commands: `lineshape`, `band`, `scurve`, `bifmap`, `critical`,
//! `swallowtail`, `stability`, `validate`. Each run writes
//! `<out>/<command>.csv` with a self-describing header row, a
//! `<out>/manifest.json` recording version, configuration fingerprint,
//! timestamps, per-file checksums and convergence diagnostics, and (unless
//! suppressed) a simple `<out>/<command>.svg` line plot.
//!
//! The configuration document format, including every default, is described
//! in [`config`]. Identical configurations produce byte-identical CSV and
//! SVG files for any worker count; if `cache_dir` is set, they are replayed
//! from the cache without recomputation.
//!
//! Exit codes: `0` success, `2` configuration error (with one message per
//! offending field), `3` computation finished without a usable result (or a
//! failed `validate` suite), `4` internal error.

pub mod cache;
pub mod config;
pub mod manifest;
pub mod plot;
pub mod run;
pub mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub use config::{Command, RunConfig};
pub use run::{dispatch, execute};

/// Batch analysis of cavity-induced band structures and their multistability.
#[derive(Debug, Parser)]
#[command(name = "cavityband", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

/// Flags shared by every command.
#[derive(Debug, Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configuration's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overrides the configuration's `workers` (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Skip SVG plot emission.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Steady-state branches over a detuning grid, with hysteresis traces.
    Lineshape(RunArgs),
    /// Band diagram over a quasi-momentum grid.
    Band(RunArgs),
    /// Parametric input-output characteristic.
    Scurve(RunArgs),
    /// Steady-state counts over a (detuning, pump) grid with fold curves.
    Bifmap(RunArgs),
    /// Numeric bistability onset with the analytic shallow-lattice value.
    Critical(RunArgs),
    /// Swallowtail points per quasi-momentum with degeneracy residuals.
    Swallowtail(RunArgs),
    /// Stability verdicts for every band-diagram branch.
    Stability(RunArgs),
    /// Cross-method and invariant checks.
    Validate(RunArgs),
}

/// Parses the command line and runs one command; returns the process exit
/// code.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 2u8,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = match cli.command {
        Sub::Lineshape(a) => (Command::Lineshape, a),
        Sub::Band(a) => (Command::Band, a),
        Sub::Scurve(a) => (Command::Scurve, a),
        Sub::Bifmap(a) => (Command::Bifmap, a),
        Sub::Critical(a) => (Command::Critical, a),
        Sub::Swallowtail(a) => (Command::Swallowtail, a),
        Sub::Stability(a) => (Command::Stability, a),
        Sub::Validate(a) => (Command::Validate, a),
    };
    let code = run::execute(command, &args.config, args.out, args.workers, args.no_plots);
    ExitCode::from(code.clamp(0, 255) as u8)
}

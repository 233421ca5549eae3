//! `leaktree`: simulate tree water networks with a pressure-dependent
//! leak and localize leaks from leaf measurements.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 model or solver
//! infeasibility, 3 no leak detected.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use leaktree::Error;

#[derive(Debug, Parser)]
#[command(
    name = "leaktree",
    version,
    about = "Steady-state hydraulics and leak localization on tree water networks",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum Format {
    /// Human-oriented text (machine output still goes to --out).
    #[default]
    Text,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario file and report every problem found.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Solve a scenario and write the leaf measurements it produces.
    ///
    /// The measurement CSV goes to --out; a state report with all
    /// heads, flows, and the leak demand goes to stdout. When the
    /// scenario carries a noise section a seed is required (--seed or
    /// `seed =` in the file) and the written measurements are noisy.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Localize a leak from a measurement file (1 snapshot for the
    /// position, 2 snapshots to also recover the leak law).
    ///
    /// The scenario file supplies the network and constants; its leak
    /// and noise sections are ignored. Exits 3 when no leak is
    /// detected.
    Localize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        /// Write the machine-readable result here (format per --format).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Inject leaks along a single pipe at a fixed spacing and tabulate
    /// true against estimated positions.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Spacing between injected leak positions (m).
        #[arg(long)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo table of mean squared error and confidence-interval
    /// coverage against the number of averaged snapshots.
    Noise {
        #[arg(long)]
        scenario: PathBuf,
        /// Trials per snapshot count.
        #[arg(long)]
        trials: usize,
        /// Comma-separated snapshot counts, e.g. "1,2,4,8".
        #[arg(long)]
        levels: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Maps library errors onto the documented exit codes.
fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::NoLeakDetected { .. } => 3,
        Error::InfeasiblePressure { .. }
        | Error::InfeasibleLeakHead { .. }
        | Error::BracketFailure { .. }
        | Error::NoConvergence { .. }
        | Error::NonMonotoneResidual { .. }
        | Error::DegenerateDenominator { .. }
        | Error::EstimateOutOfRange { .. }
        | Error::InsufficientExcitation(_)
        | Error::AmbiguousSubtree { .. }
        | Error::SnapshotMismatch { .. }
        | Error::RegimeBoundary { .. } => 2,
        _ => 1,
    }
}

/// Rust ignores SIGPIPE by default, which turns `leaktree ... | head`
/// into a panic on the first failed print. Restore the default
/// disposition so a closed pipe just ends the process.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own help/version output is a success, not a usage
            // error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Validate { scenario } => commands::validate(&scenario),
        Command::Simulate { scenario, out, seed, format } => {
            commands::simulate(&scenario, &out, seed, format)
        }
        Command::Localize { scenario, measurements, out, format } => {
            commands::localize(&scenario, &measurements, out.as_deref(), format)
        }
        Command::Sweep { scenario, step, out } => commands::sweep(&scenario, step, &out),
        Command::Noise { scenario, trials, levels, seed, out } => {
            commands::noise(&scenario, trials, &levels, seed, &out)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

pub(crate) use Format as OutputFormat;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vortex_cli::commands::{self, Common};
use vortex_cli::config::Overrides;

/// Continuation solver for vortex and Higgs equations on compact surfaces.
///
/// Exit codes: 0 converged or all checks passed, 2 diverged, 1 failure.
/// VORTEX_OUT_DIR overrides every other output directory setting.
#[derive(Parser, Debug)]
#[command(name = "vortex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// Flat key = value problem description
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR", global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N", global = true)]
    seed: Option<u64>,
    /// Grid size; not allowed with a shipped instance
    #[arg(long, value_name = "N", global = true)]
    grid: Option<usize>,
    /// Smallest continuation parameter before the final polish
    #[arg(long, value_name = "X", global = true)]
    eps_min: Option<f64>,
    /// Coarse grids
    #[arg(long, global = true)]
    quick: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one continuation and write report.json, trace.csv and convergence.svg
    Solve(Wrap),
    /// Solve on a list of tau values and/or bisect for the solvability threshold
    SweepTau(Wrap),
    /// Stability window of the configured split model
    Stability(Wrap),
    /// Run the property suites
    Verify {
        /// all, geometry, fiber, pair, continuation or higgs
        #[arg(long)]
        suite: Option<String>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Re-render trace.csv and convergence.svg from a report.json
    Report {
        /// Directory holding report.json (default: the output directory)
        dir: Option<PathBuf>,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args, Debug)]
struct Wrap {
    #[command(flatten)]
    flags: Flags,
}

impl From<&Flags> for Common {
    fn from(f: &Flags) -> Self {
        Common {
            config: f.config.clone(),
            out: f.out.clone(),
            overrides: Overrides { grid: f.grid, eps_min: f.eps_min, seed: f.seed, quick: f.quick },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(w) => commands::solve(&(&w.flags).into()),
        Command::SweepTau(w) => commands::sweep_tau(&(&w.flags).into()),
        Command::Stability(w) => commands::stability(&(&w.flags).into()),
        Command::Verify { suite, flags } => commands::verify(&flags.into(), suite.as_deref()),
        Command::Report { dir, flags } => commands::rerender(&flags.into(), dir.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

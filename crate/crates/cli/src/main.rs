//! Command-line front end.
//!
//! Every subcommand reads one flat key-value config file, runs the named
//! pipeline, and writes CSV tables plus a `metadata.txt` sidecar into the
//! output directory. Exit codes: 0 success, 2 configuration, 3 data,
//! 4 divergence, 5 domain coverage, 6 numerical failure.

mod config;
mod expr;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "goursat",
    version,
    about = "Characteristic initial-value toolkit on a truncated null wedge"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March the configured system across the wedge lattice.
    Evolve(CommonArgs),
    /// Transport the transversal derivative K over both null planes.
    Constraints(CommonArgs),
    /// Solve by backward-cone integration with Picard iteration.
    Kirchhoff(CommonArgs),
    /// Tabulate the norm family of the configured field.
    Norms(CommonArgs),
    /// Measure convergence orders against a manufactured solution.
    Convergence(CommonArgs),
    /// Run the hypothesis validators on the configured system and data.
    Checks(CommonArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Configuration file (flat `key = value` text).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the `out` key).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Refinement levels (overrides the `levels` key).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Sampling seed (overrides the `seed` key).
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Evolve(a) => ("evolve", a),
        Command::Constraints(a) => ("constraints", a),
        Command::Kirchhoff(a) => ("kirchhoff", a),
        Command::Norms(a) => ("norms", a),
        Command::Convergence(a) => ("convergence", a),
        Command::Checks(a) => ("checks", a),
    };
    match run::run(name, args) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

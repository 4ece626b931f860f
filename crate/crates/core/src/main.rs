use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochfv::cli::{execute, Command, Invocation};

/// Finite-volume solver for the stochastic diffusion–convection equation.
#[derive(Parser)]
#[command(name = "stochfv", version)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check mesh admissibility, coefficient constants and the flux defect.
    Validate(Common),
    /// Solve one path; writes trajectory.csv and norms.csv.
    Run(Common),
    /// Monte Carlo estimates; writes estimates.csv, stability.csv and optionally energy.csv.
    Mc(Common),
    /// Refinement study; writes rates.csv and gaps.csv.
    Converge(Common),
    /// Print mesh statistics.
    MeshInfo(Common),
}

#[derive(clap::Args)]
struct Common {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: output.dir from the config, else ./out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; never changes results.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (command, common) = match args.command {
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Run(c) => (Command::Run, c),
        Cmd::Mc(c) => (Command::Mc, c),
        Cmd::Converge(c) => (Command::Converge, c),
        Cmd::MeshInfo(c) => (Command::MeshInfo, c),
    };
    let inv =
        Invocation { command, config: common.config, out: common.out, seed: common.seed, threads: common.threads.map(|t| t as usize) };
    match execute(&inv) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

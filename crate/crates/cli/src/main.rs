//! `subeig`: problem generation, eigensolves, verification suites and reports.

mod config;
mod exit;
mod gen;
mod report;
mod solve;
mod verify;

use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use exit::{CliResult, Failure};

#[derive(Parser)]
#[command(name = "subeig", version, about = "Subspace-projection eigensolvers with multigrid coarse spaces")]
struct Cli {
    /// JSON file of option values; flags on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a model problem in Matrix Market format with a manifest.
    Gen(gen::GenArgs),
    /// Run the block or single-vector method on a problem.
    Solve(solve::SolveArgs),
    /// Run randomized verification of the error and rate estimates.
    Verify(verify::VerifyArgs),
    /// Summarize or convert a report.
    Report(report::ReportArgs),
}

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("SUBEIG_THREADS") else {
        return Ok(());
    };
    let n = raw
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("SUBEIG_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::config(e.to_string()))
}

fn run() -> CliResult<i32> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    init_threads()?;
    let cfg = match &cli.config {
        Some(p) => config::load(p)?,
        None => Default::default(),
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match cli.command {
        Command::Gen(a) => gen::run(config::merge(a, sub, &cfg)?),
        Command::Solve(a) => solve::run(config::merge(a, sub, &cfg)?),
        Command::Verify(a) => verify::run(config::merge(a, sub, &cfg)?),
        Command::Report(a) => report::run(config::merge(a, sub, &cfg)?),
    }
}

fn main() {
    let code = run().unwrap_or_else(|f| {
        eprintln!("error: {}", f.msg);
        f.code
    });
    std::process::exit(code);
}

//! `catmap`: data generation, OT costs, map fitting, colour transfer and
//! scripted reproductions.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cmd;
mod colour;
mod error;
mod output;
mod settings;

use cmd::Context;
use error::{CliError, CliResult};
use output::OutDir;
use settings::ConfigFile;

#[derive(Debug, Parser)]
#[command(name = "catmap", version, about = "Constrained approximate optimal transport maps")]
struct Cli {
    /// Seed for every random draw (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving all outputs (default ./out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// JSON config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a discrete measure from a distribution.
    Gen(cmd::gen::GenArgs),
    /// Exact optimal transport cost between two measures.
    Ot(cmd::ot::OtArgs),
    /// Fit a constrained map from a source to a target measure.
    Fit(cmd::fit::FitArgs),
    /// Colour transfer between PNG images.
    Transfer(cmd::transfer::TransferArgs),
    /// Run a scripted experiment.
    Repro(cmd::repro::ReproArgs),
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("CATMAP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("CATMAP_THREADS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(CliError::Usage("CATMAP_THREADS must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let config = ConfigFile::load(cli.config.as_deref())?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let root = cli
        .out_dir
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context {
        seed,
        out: OutDir::create(&root)?,
        config,
    };
    match &cli.command {
        Command::Gen(a) => cmd::gen::run(&ctx, a),
        Command::Ot(a) => cmd::ot::run(&ctx, a),
        Command::Fit(a) => cmd::fit::run(&ctx, a),
        Command::Transfer(a) => cmd::transfer::run(&ctx, a),
        Command::Repro(a) => cmd::repro::run(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("catmap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

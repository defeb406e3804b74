//! `multitime`: command-line front end for the equilibration library.
//!
//! Exit codes: 0 success, 1 bound violation, 2 configuration or I/O error,
//! 3 dimension error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{Global, Violation};
use config::{DeffArgs, DiamondArgs, FileConfig, Fig2Args, NonmarkovArgs, Overlay, TensorDumpArgs, VerifyArgs};

#[derive(Debug, Parser)]
#[command(name = "multitime", version, about = "Multitime equilibration experiments")]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, env = "MULTITIME_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for the parallel parts.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Effective dimension of a state with respect to a Hamiltonian.
    Deff(DeffArgs),
    /// Monte Carlo check of the variance and tail bounds over many seeds.
    VerifyBounds(VerifyArgs),
    /// Non-Markovianity sweep over bath sizes, raw and binned.
    Fig2(Fig2Args),
    /// Operational diamond distance between a process and its equilibrium.
    Diamond(DiamondArgs),
    /// One random-bath causal-break protocol run.
    Nonmarkov(NonmarkovArgs),
    /// Writes a process tensor in CSV or binary form.
    TensorDump(TensorDumpArgs),
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let global = Global {
        seed: cli.seed.or(file.seed).unwrap_or(2024),
        out_dir: cli.out_dir.or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
    };
    let workers = cli.workers.or(file.workers);
    let dispatch = move || match cli.command {
        Command::Deff(a) => commands::deff(&global, a.overlay(file.deff)),
        Command::VerifyBounds(a) => commands::verify_bounds(&global, a.overlay(file.verify_bounds)),
        Command::Fig2(a) => commands::fig2(&global, a.overlay(file.fig2)),
        Command::Diamond(a) => commands::diamond(&global, a.overlay(file.diamond)),
        Command::Nonmarkov(a) => commands::nonmarkov(&global, a.overlay(file.nonmarkov)),
        Command::TensorDump(a) => commands::tensor_dump(&global, a.overlay(file.tensor_dump)),
    };
    match workers {
        Some(0) => anyhow::bail!("workers must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(dispatch),
        None => dispatch(),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Violation>() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<multitime::Error>() {
            return match err {
                multitime::Error::DimensionMismatch(_)
                | multitime::Error::BadFactorIndex { .. }
                | multitime::Error::TooLarge(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if code != 1 {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}

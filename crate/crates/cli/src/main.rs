//! `sls`: batch front end for synthesis, verification and simulation.
//!
//! Exit codes: 0 success, 1 other failure, 2 unreadable or invalid
//! config/artifact, 3 infeasible synthesis, 4 negative slack in verification.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum Failure {
    /// config or artifact could not be parsed or is inconsistent
    Config(String),
    Infeasible(String),
    NegativeSlack(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::NegativeSlack(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Infeasible(m) | Failure::NegativeSlack(m) | Failure::Other(m) => m,
        }
    }
}

impl From<sls_core::Error> for Failure {
    fn from(e: sls_core::Error) -> Self {
        match e {
            sls_core::Error::Infeasible(_) => Failure::Infeasible(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Centralized,
    Distributed,
}

#[derive(Parser)]
#[command(
    name = "sls",
    version,
    about = "Constrained and distributed System Level Synthesis",
    after_help = "Exit codes: 0 ok, 1 other failure, 2 bad config or artifact, 3 infeasible, 4 negative slack"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a controller and write its response and certificate
    Synth {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "centralized")]
        mode: Mode,
        /// dual step size of the distributed iteration
        #[arg(long)]
        alpha: Option<f64>,
        /// stopping tolerance of the distributed iteration
        #[arg(long)]
        eps: Option<f64>,
        /// seeds the message order of the distributed iteration
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit a response against the configured bounds
    Verify {
        config: PathBuf,
        #[arg(long)]
        phi: PathBuf,
        /// row whose worst case is exported; the binding row by default
        #[arg(long)]
        row: Option<usize>,
        /// frequency grid for the small-gain checks
        #[arg(long, default_value_t = 512)]
        grid: usize,
        /// model matrix (JSON rows) for the internal-model small-gain check
        #[arg(long)]
        model: Option<PathBuf>,
        /// directory of compensator responses (`node_<i>.json`)
        #[arg(long)]
        compensators: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the naive and compensated loops on the configured scenario
    Simulate {
        config: PathBuf,
        #[arg(long)]
        phi: PathBuf,
        /// directory of compensator responses; synthesized when absent
        #[arg(long)]
        compensators: Option<PathBuf>,
        /// overrides the seed of a random scenario
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a chain system as JSON
    ChainGen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.4)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth {
            config,
            mode,
            alpha,
            eps,
            seed,
            out,
        } => commands::synth(&config, mode, alpha, eps, seed, out),
        Command::Verify {
            config,
            phi,
            row,
            grid,
            model,
            compensators,
            out,
        } => commands::verify(&config, &phi, row, grid, model.as_deref(), compensators.as_deref(), out),
        Command::Simulate {
            config,
            phi,
            compensators,
            seed,
            out,
        } => commands::simulate(&config, &phi, compensators.as_deref(), seed, out),
        Command::ChainGen { n, alpha, rho, out } => commands::chain_gen(n, alpha, rho, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

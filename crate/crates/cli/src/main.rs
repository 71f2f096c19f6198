mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Format, RunConfig};

/// Cirac-Zoller gate simulator for trapped-ion chains.
#[derive(Debug, Parser)]
#[command(name = "czsim", version)]
pub struct Cli {
    /// JSON run configuration; omitted sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for result files (overrides `output.directory`).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Sampling seed (overrides `tomography.seed`, default 20231017).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for rows and trajectories; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the full default configuration and exit.
    #[arg(long)]
    emit_default_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transverse mode frequencies, participation and Lamb-Dicke table.
    Modes,
    /// Pulse sequence of the configured gate.
    Compile {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Simulated truth table and fidelity report.
    TruthTable {
        #[arg(long)]
        n: Option<usize>,
        /// Switch every noise source off.
        #[arg(long)]
        noiseless: bool,
        /// Also run the controlled-Z tables with each qubit in the |+>/|-> basis.
        #[arg(long)]
        all_bases: bool,
        /// Shots per input row.
        #[arg(long)]
        shots: Option<u64>,
    },
    /// Process-fidelity bounds from conjugate-basis truth-table fidelities.
    Bounds {
        #[arg(long, value_delimiter = ',', required = true)]
        fk: Vec<f64>,
    },
    /// Infidelity contributed by each noise source.
    ErrorBudget {
        #[arg(long)]
        n: Option<usize>,
    },
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<czsim::Error> for Failure {
    fn from(e: czsim::Error) -> Self {
        if e.is_capacity() {
            Self {
                code: 3,
                message: format!(
                    "{e}\nhint: simulate the bus mode alone (propagation.included_modes = []), lower the Fock cutoffs, \
                     or raise propagation.caps"
                ),
            }
        } else if e.is_numerical() {
            Self { code: 4, message: e.to_string() }
        } else {
            Self::config(e.to_string())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.emit_default_config {
        println!("{}", RunConfig::default().to_json());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure::config("no command given; see --help"));
    };
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = cli.output_dir {
        cfg.output.directory = d;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(s) = cli.seed {
        cfg.tomography.seed = s;
        cfg.budget.table.seed = s;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::config(format!("cannot size the thread pool: {e}")))?;
    }
    commands::dispatch(command, cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

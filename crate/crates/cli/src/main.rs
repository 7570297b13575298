//! `glmscreen` command-line interface.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::Failure;
use config::{ConstructKind, ExperimentConfig, Overrides};

/// Model-robust GLM designs and screening simulations.
#[derive(Parser)]
#[command(name = "glmscreen", version)]
struct Cli {
    /// Worker threads (defaults to the machine's parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for (or construct) a design and write it out.
    Design {
        #[command(flatten)]
        o: Overrides,
        /// Also write the annealing trace.
        #[arg(long)]
        trace: bool,
    },
    /// Build a closed-form design.
    Construct {
        #[command(flatten)]
        o: Overrides,
        #[arg(long, value_enum, default_value = "min-support")]
        kind: ConstructKind,
    },
    /// D-efficiency of a design over prior draws.
    Evaluate {
        #[command(flatten)]
        o: Overrides,
    },
    /// Screening simulation: power, type I error and FDR per true model.
    Simulate {
        #[command(flatten)]
        o: Overrides,
    },
    /// All-subsets selection on one dataset (CSV `y,x1..xq[,n]`).
    Fit {
        #[command(flatten)]
        o: Overrides,
        #[arg(long)]
        data: PathBuf,
    },
    /// GIC penalties of every fitted model under chosen true models.
    PenaltyStudy {
        #[command(flatten)]
        o: Overrides,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::config(format!("--threads: {e}")))?;
    }
    let resolve = |o: &Overrides| ExperimentConfig::resolve(o).map_err(Failure::config);
    match cli.command {
        Command::Design { o, trace } => commands::design(&resolve(&o)?, trace),
        Command::Construct { mut o, kind } => {
            o.construct = Some(kind);
            commands::design(&resolve(&o)?, false)
        }
        Command::Evaluate { o } => commands::evaluate(&resolve(&o)?),
        Command::Simulate { o } => commands::simulate(&resolve(&o)?),
        Command::Fit { o, data } => commands::fit(&resolve(&o)?, &data),
        Command::PenaltyStudy { o } => commands::penalty_study(&resolve(&o)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}

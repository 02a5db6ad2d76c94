use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{self, EvalArgs, GenerateArgs, RunArgs, TrainArgs, TransferArgs};
use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

pub const THREADS_ENV: &str = "FLOWBRIDGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "flowbridge", version, about = "Unpaired simulated-to-real transfer of tissue spectra")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the simulated and pseudo-real benchmark splits
    GenerateData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Train the flow on a generated data directory
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Total epoch budget, overriding the config
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a training checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Map labeled simulated spectra into the real domain
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Downstream classification and realism analyses
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Precomputed transfer of the simulated split
        #[arg(long)]
        transferred: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Write report.md for an evaluation directory
    Report {
        #[arg(long)]
        eval_dir: PathBuf,
    },
    /// Run every stage end to end
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the config's output_dir
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
}

/// Sizes the global worker pool from `FLOWBRIDGE_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size worker pool: {e}")))
}

fn load(config: Option<&PathBuf>, seed: Option<u64>) -> Result<PipelineConfig> {
    Ok(PipelineConfig::load(config.map(PathBuf::as_path))?.with_seed(seed))
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData { config, out, seed, force } => commands::generate_data(GenerateArgs {
            config: &load(config.as_ref(), seed)?,
            out: &out,
            force,
        }),
        Command::Train {
            config,
            data,
            out,
            seed,
            epochs,
            resume,
            force,
        } => commands::train(TrainArgs {
            config: &load(config.as_ref(), seed)?,
            data: &data,
            out: &out,
            epochs,
            resume: resume.as_deref(),
            force,
        }),
        Command::Transfer { checkpoint, input, out } => commands::transfer(TransferArgs {
            checkpoint: &checkpoint,
            input: &input,
            out: &out,
        }),
        Command::Eval {
            checkpoint,
            data_dir,
            out,
            config,
            seed,
            transferred,
            force,
        } => commands::eval(EvalArgs {
            checkpoint: &checkpoint,
            data_dir: &data_dir,
            out: &out,
            transferred: transferred.as_deref(),
            config: &load(config.as_ref(), seed)?.eval,
            force,
        }),
        Command::Report { eval_dir } => commands::report(&eval_dir).map(|md| print!("{md}")),
        Command::Run { config, out, seed, force } => {
            let cfg = load(config.as_ref(), seed)?;
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| CliError::Usage("run needs --out or output_dir in the config".into()))?;
            commands::run(RunArgs {
                config: &cfg,
                out: &out,
                force,
            })
        }
    }
}

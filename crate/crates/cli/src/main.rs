//! `ebp`: trains and evaluates sign-activation networks with factorized
//! weight posteriors on MNIST, and regenerates the result tables.
//!
//! Subcommands: `train` (fresh run), `resume` (continue a checkpoint),
//! `eval` (score a checkpoint on the test split), `table` (combine run
//! summaries). Every configuration key is a flag and may also come from a
//! flat key=value file via `--config`; explicit flags win.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error (unreadable
//! dataset, artifacts, or checkpoints), 3 numerical abort.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

mod config;
mod runner;
mod table;

use config::{InputMode, Mode, PartialConfig};

/// Run failure with the exit code it maps to.
#[derive(Debug)]
pub enum RunError {
    /// Invalid or contradictory configuration (exit 1).
    Config(String),
    /// Unreadable or malformed dataset, artifact, or checkpoint (exit 2).
    Data(String),
    /// Training state became non-finite (exit 3).
    Numerical(String),
}

impl RunError {
    pub fn config(msg: impl Into<String>) -> Self {
        RunError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        RunError::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        RunError::Numerical(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 1,
            RunError::Data(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) | RunError::Data(m) | RunError::Numerical(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ebp_core::mnist::DataError> for RunError {
    fn from(e: ebp_core::mnist::DataError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<ebp_core::checkpoint::CheckpointError> for RunError {
    fn from(e: ebp_core::checkpoint::CheckpointError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<ebp_core::model::ModelError> for RunError {
    fn from(e: ebp_core::model::ModelError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<ebp_core::engine::EngineError> for RunError {
    fn from(e: ebp_core::engine::EngineError) -> Self {
        RunError::Config(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "ebp", version, about = "Mean-field training of sign networks with binary or real weight posteriors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// The configuration surface shared by `train` and `resume`.
#[derive(Args, Debug, Default)]
struct RunFlags {
    /// Flat key=value configuration file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight family: binary or real.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Connectivity: vector (dense) or spatial (sliding blocks).
    #[arg(long, value_enum)]
    input_mode: Option<InputMode>,
    /// Comma-separated hidden unit counts (vector mode), e.g. 800,800.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Comma-separated receptive-field block sizes (spatial mode).
    #[arg(long, value_delimiter = ',')]
    block: Option<Vec<usize>>,
    /// Train with dropout: true or false.
    #[arg(long)]
    dropout: Option<bool>,
    /// Dropout keep probability.
    #[arg(long)]
    p: Option<f64>,
    /// Epochs to train to.
    #[arg(long)]
    epochs: Option<u32>,
    /// Training-subset size; 0 trains on the full split.
    #[arg(long)]
    subset: Option<usize>,
    /// Posterior initialization seed.
    #[arg(long)]
    seed_init: Option<u64>,
    /// Presentation-order and subset-selection seed.
    #[arg(long)]
    seed_shuffle: Option<u64>,
    /// Dropout-mask seed.
    #[arg(long)]
    seed_dropout: Option<u64>,
    /// Directory with the four IDX dataset files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Run output directory (config.txt, metrics.csv, checkpoint.bin, summary.txt).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunFlags {
    /// File values overlaid with the explicit flags.
    fn merged(self) -> Result<PartialConfig, RunError> {
        let from_file = match &self.config {
            Some(path) => config::parse_file(path)?,
            None => PartialConfig::default(),
        };
        Ok(from_file.overridden_by(PartialConfig {
            mode: self.mode,
            input_mode: self.input_mode,
            hidden: self.hidden,
            block: self.block,
            dropout: self.dropout,
            p: self.p,
            epochs: self.epochs,
            subset: self.subset,
            seed_init: self.seed_init,
            seed_shuffle: self.seed_shuffle,
            seed_dropout: self.seed_dropout,
            data_dir: self.data_dir,
            out: self.out,
        }))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a run from scratch.
    Train(RunFlags),
    /// Continue a checkpointed run up to the configured epoch count.
    Resume {
        #[command(flatten)]
        flags: RunFlags,
        /// Checkpoint to continue from.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        /// Checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory with the four IDX dataset files.
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        /// Optional file for the key=value metrics.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine finished run directories into the error table.
    Table {
        /// Run directories containing summary.txt files.
        run_dirs: Vec<PathBuf>,
        /// Optional directory for table.csv and table.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(command: Command) -> Result<(), RunError> {
    match command {
        Command::Train(flags) => runner::train(&flags.merged()?.resolve()?),
        Command::Resume { flags, checkpoint } => runner::resume(flags.merged()?, &checkpoint),
        Command::Eval { checkpoint, data_dir, out } => runner::eval(&checkpoint, &data_dir, out.as_deref()),
        Command::Table { run_dirs, out } => table::emit_table(&run_dirs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; anything else is a
            // configuration error per the exit-code contract.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

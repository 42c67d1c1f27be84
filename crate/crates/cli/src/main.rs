//! `neaw`: dataset generation, encoder and classifier training, evaluation,
//! analysis, verification suites and exports.
//!
//! Exit codes: 0 success, 1 verification violation, 2 usage or config
//! error, 3 I/O or malformed input file.

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod manifest;
mod settings;

use settings::Flags;

#[derive(Debug, Parser)]
#[command(name = "neaw", version, about = "Neuron-activity-aware Hebbian point-cloud encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate or ingest a dataset into --out.
    Gen,
    /// Train the encoder without labels on the train split of --data.
    TrainEncoder,
    /// Train the classifier head on frozen encoder features.
    TrainClassifier,
    /// Score a trained model on a dataset split.
    Eval,
    /// Activity statistics and class dissimilarity of a trained encoder.
    Analyze,
    /// Run a verification suite; exits 1 on any violation.
    Verify,
    /// Short NeAW runs over a grid of (a, b).
    SweepAb,
    /// Write CSV artifacts (weights, features, activity) for plotting.
    Export,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::TrainEncoder => "train-encoder",
            Command::TrainClassifier => "train-classifier",
            Command::Eval => "eval",
            Command::Analyze => "analyze",
            Command::Verify => "verify",
            Command::SweepAb => "sweep-ab",
            Command::Export => "export",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Violation(String),
    Core(neaw::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Violation(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                neaw::Error::Io { .. } | neaw::Error::Format(_) | neaw::Error::Parse { .. } => 3,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Violation(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<neaw::Error> for CliError {
    fn from(e: neaw::Error) -> Self {
        CliError::Core(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut flags = cli.flags;
    flags.merge_config_file()?;
    flags.validate()?;
    let name = cli.command.name();
    match cli.command {
        Command::Gen => commands::gen(&flags, name),
        Command::TrainEncoder => commands::train_encoder(&flags, name),
        Command::TrainClassifier => commands::train_classifier(&flags, name),
        Command::Eval => commands::eval(&flags, name),
        Command::Analyze => commands::analyze(&flags, name),
        Command::Verify => commands::verify(&flags, name),
        Command::SweepAb => commands::sweep_ab(&flags, name),
        Command::Export => commands::export(&flags, name),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

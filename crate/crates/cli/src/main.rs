//! `agtfuse`: command-line front-end for the fusion pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agtfuse_core::config::RunConfig;
use agtfuse_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "agtfuse",
    version,
    about = "Audio-guided multimodal emotion fusion pipeline"
)]
struct Cli {
    /// TOML run configuration. Flags given on the command line override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multimodal dataset
    GenData(commands::GenDataArgs),
    /// Train one classifier on a labeled dataset
    Train(commands::TrainArgs),
    /// Write class probabilities for every sample of a dataset
    Predict(commands::PredictArgs),
    /// Filter predictions by confidence and intersect three models
    PseudoLabel(commands::PseudoLabelArgs),
    /// Staged self-training of the three classifiers
    SelfTrain(commands::SelfTrainArgs),
    /// Regularized voting over three prediction files
    Vote(commands::VoteArgs),
    /// F1 scores of predictions against a labeled dataset
    Eval(commands::EvalArgs),
    /// Label distribution of a training set next to a test-set estimate
    Report(commands::ReportArgs),
    /// Run an ablation grid and write the results table
    Ablate(commands::AblateArgs),
}

/// Seed flag shared by every subcommand that uses randomness.
#[derive(Args, Debug, Clone, Copy)]
pub struct SeedArg {
    /// Seed for all randomness in this command [default: taken from the config, 0 if unset]
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(cli.config.as_deref()).and_then(|cfg| commands::run(cli.command, cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(path: Option<&std::path::Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Bad flag values and bad configuration are usage errors (2); everything
/// else is a data error (1).
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) => 2,
        _ => 1,
    }
}

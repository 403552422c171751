//! `miml` runs the full pipeline from one executable: dataset conversion,
//! synthetic generation, training, evaluation, attention export, and
//! multi-seed report aggregation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! Diagnostics go to stderr, summary tables to stdout. Every output
//! directory is built in a temporary sibling and renamed into place, so a
//! failed run leaves no partial state behind.

mod commands;
mod outdir;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{AttentionArgs, ConvertArgs, EvaluateArgs, ReportArgs, SynthArgs, TrainArgs};
use miml_core::Error;

const TRAIN_CONFIG_SCHEMA: &str = "\
The --config file is JSON with these keys (all optional; defaults shown):
  {
    \"batch_size\": 128,          // bags per mini-batch
    \"lr\": 0.0005,               // Adam learning rate
    \"epochs\": 250,
    \"seed\": 0,                  // master seed; --seed overrides
    \"val_fraction\": 0.15,       // carved from train when no val split exists
    \"dropout_rate\": 0.6,
    \"fc_hidden\": [512, 512],    // hidden widths of the fc baseline
    \"checkpoint_dir\": null,     // --out overrides
    \"loss\": { \"alpha\": 1.0, \"beta\": 0.0, \"gamma\": -1.0 }
  }
Unknown keys are rejected. CLI flags take precedence over file values.";

#[derive(Parser)]
#[command(
    name = "miml",
    version,
    about = "Multi-instance multi-label attention classifier pipeline",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an OpenMIC-style NPZ plus split lists into a dataset directory
    Convert(ConvertArgs),
    /// Generate a synthetic dataset with planted instance-level ground truth
    Synth(SynthArgs),
    /// Train a model and checkpoint the best-validation epoch
    #[command(after_long_help = TRAIN_CONFIG_SCHEMA)]
    Train(TrainArgs),
    /// Score a checkpoint on one split and write the metric report CSV
    Evaluate(EvaluateArgs),
    /// Export per-sample attention weights as JSON (optionally SVG strips)
    Attention(AttentionArgs),
    /// Aggregate per-seed evaluation CSVs into box-plot statistics
    Report(ReportArgs),
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArg(_) => 1,
        Error::NonFinite(_) | Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Convert(args) => commands::convert(args),
        Command::Synth(args) => commands::synth(args),
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Attention(args) => commands::attention(args),
        Command::Report(args) => commands::report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

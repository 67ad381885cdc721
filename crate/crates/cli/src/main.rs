//! `layoutrank`: the pairwise layout-scoring pipeline as subcommands.
//!
//! Every subcommand writes its main artifact to `--out` (stdout when
//! absent). A short JSON summary goes to stdout when the artifact went to a
//! file, and to stderr otherwise. Failures print `{"error": ...}` on stderr
//! and exit nonzero.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{
    AnalyzeArgs, CalibrateArgs, EvalArgs, GenPairsArgs, LabelArgs, OptimizeArgs, ResampleArgs, ServeArgs,
    TrainArgs,
};

#[derive(Debug, Parser)]
#[command(name = "layoutrank", version, about = "Learn and maximize bar chart layout scores from pairwise comparisons")]
struct Cli {
    /// JSON settings file with one object per subcommand name; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample unlabeled comparison pairs from a parameter grid.
    GenPairs(GenPairsArgs),
    /// Label pairs with the simulated rater panel.
    Label(LabelArgs),
    /// Re-weight (importance) or refine (gradient) a grid.
    Resample(ResampleArgs),
    /// Fit a scoring model on labeled pairs.
    Train(TrainArgs),
    /// Monte-Carlo cross-validation of one or more methods.
    Eval(EvalArgs),
    /// Correlation, heat map and box-plot tables for a model.
    Analyze(AnalyzeArgs),
    /// Brute-force the best layout for a data table.
    Optimize(OptimizeArgs),
    /// Run the labeling HTTP service.
    Serve(ServeArgs),
    /// Find the choice temperature that gives a target unanimity rate.
    CalibrateOracle(CalibrateArgs),
}

fn fail(value: serde_json::Value) {
    eprintln!("{value}");
}

/// The error chain joined with ": ", skipping causes a parent already quotes.
fn message(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    fail(serde_json::json!({
                        "error": e.render().to_string().trim(),
                        "kind": "usage",
                    }));
                    ExitCode::from(2)
                }
            };
        }
    };
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::GenPairs(a) => commands::gen_pairs(a, config),
        Command::Label(a) => commands::label(a, config),
        Command::Resample(a) => commands::resample(a, config),
        Command::Train(a) => commands::train(a, config),
        Command::Eval(a) => commands::eval(a, config),
        Command::Analyze(a) => commands::analyze(a, config),
        Command::Optimize(a) => commands::optimize(a, config),
        Command::Serve(a) => commands::serve(a, config),
        Command::CalibrateOracle(a) => commands::calibrate(a, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            fail(serde_json::json!({ "error": message(&e) }));
            ExitCode::FAILURE
        }
    }
}

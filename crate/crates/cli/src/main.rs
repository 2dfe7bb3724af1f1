//! `evident`: synthetic data, DocRED adaptation, training, explanation and
//! evaluation from the command line.

mod commands;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgAction, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "evident", version, about = "Evidence-faithful document classification")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic evidence-grounded corpus as JSONL.
    SynthData(commands::synth::Args),
    /// Convert DocRED JSON into document-classification JSONL.
    AdaptDocred(commands::docred::Args),
    /// Train a classifier with the selected regularizers.
    Train(commands::train::Args),
    /// Attribute, select sufficient evidence and write predictions.
    Explain(commands::explain::Args),
    /// Score prediction files against gold data.
    Evaluate(commands::evaluate::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::SynthData(args) => commands::synth::run(args),
        Command::AdaptDocred(args) => commands::docred::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Explain(args) => commands::explain::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", run::error_line(&e));
            ExitCode::FAILURE
        }
    }
}

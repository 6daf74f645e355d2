mod args;
mod commands;
mod failure;
mod settings;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};

use crate::args::{Cli, Command};
use crate::failure::Failure;

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SSCNN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::usage(format!("SSCNN_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn run() -> Result<(), Failure> {
    let matches = Cli::command().get_matches();
    let cli = Cli::from_arg_matches(&matches).map_err(|e| e.exit()).unwrap();
    configure_threads()?;
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match &cli.command {
        Command::Train(a) => commands::cmd_train(sub, a),
        Command::Predict(a) => commands::cmd_predict(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::Analyze(a) => commands::cmd_analyze(sub, a),
        Command::Params(a) => commands::cmd_params(sub, a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

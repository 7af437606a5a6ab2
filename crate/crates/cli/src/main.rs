mod cli;
mod commands;
mod config;
mod error;
mod provenance;
mod render;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::error::{CliError, Result};

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rtf_core::exec::configure_threads(n).map_err(CliError::usage)?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate::run(a),
        Command::GenDataset(a) => commands::gen_dataset::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run_eval(a),
        Command::Compare(a) => commands::eval::run_compare(a),
        Command::Plots(a) => commands::plots::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

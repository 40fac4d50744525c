mod args;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches};

use crate::args::{Cli, Command};
use crate::error::CliResult;

fn parse(argv: Vec<String>) -> Result<Cli, clap::Error> {
    let command = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    let matches = command.try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Design(a) => commands::design(a),
        Command::Select(a) => commands::select(a),
        Command::TheoryPhase(a) => commands::theory_phase(a),
        Command::TheoryTradeoff(a) => commands::theory_tradeoff(a),
        Command::TheoryExponent(a) => commands::theory_exponent(a),
        Command::Simulate(a) => commands::simulate(a),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("fdrlab: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fdrlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

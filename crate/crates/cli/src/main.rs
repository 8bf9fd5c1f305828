//! `tvmix` command-line front end.

mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::error::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Numerical { .. } = e {
                if let Err(w) = output::write_diagnostics(&cli, &e) {
                    eprintln!("could not write diagnostics: {w}");
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}

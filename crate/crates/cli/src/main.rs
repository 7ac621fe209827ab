//! `qbayes` command-line tool.
//!
//! Every subcommand writes into a fresh run directory: `manifest.json`
//! first, then `results.json` and any CSVs. Results are also printed to
//! stdout as JSON. Exit status is 0 on success, 1 for invalid input and 2
//! for a numerical failure.

mod cli;
mod commands;
mod config;
mod error;
mod run;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = match cli::Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(args.command) {
        Ok(outcome) => {
            eprintln!("run directory: {}", outcome.dir.display());
            match serde_json::to_string_pretty(&outcome.results) {
                // a closed pipe downstream is not our failure
                Ok(s) => {
                    let _ = writeln!(std::io::stdout().lock(), "{s}");
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

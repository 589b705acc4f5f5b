mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use commands::Failure;

const USAGE: u8 = 64;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE),
            };
        }
    };
    match commands::run(&cli) {
        Ok(status) => {
            eprintln!("{status}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            let label = match failure {
                Failure::Verification(_) => "FAIL",
                _ => "error",
            };
            eprintln!("{label}: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use tadsim_cli::{execute, Cli, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(CliError::VALIDATION),
            };
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        // The command ran but its check did not hold.
        Ok(false) => ExitCode::from(CliError::VALIDATION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

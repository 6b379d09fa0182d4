use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match latdiff_cli::run(latdiff_cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

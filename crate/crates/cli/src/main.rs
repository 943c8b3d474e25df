use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = sporal_cli::Cli::parse();
    match sporal_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(sporal_cli::exit_code(e.category()))
        }
    }
}

use std::process::ExitCode;

use clap::Parser;
use shflab::commands::{configure_threads, execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|_| execute(cli));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("shflab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

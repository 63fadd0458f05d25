use std::process::ExitCode;

use clap::Parser;

use dynrecon_cli::{error_summary, execute, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_summary(&e));
            ExitCode::FAILURE
        }
    }
}

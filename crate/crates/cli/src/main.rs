//! `nre`: simulate datasets, train ratio estimators, sample posteriors, and
//! run diagnostics from the command line.

mod args;
mod commands;
mod config;
mod run;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

/// Exit codes: usage errors 2, data errors 3, numeric errors 4.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] nre_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.category() {
                nre_core::ErrorCategory::Usage => 2,
                nre_core::ErrorCategory::Data => 3,
                nre_core::ErrorCategory::Numeric => 4,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `layoutbench` command-line entry point.
//!
//! Exit status: 0 success (for `evaluate`, a correct verdict), 1 I/O or other
//! failure, 2 configuration error, and for `evaluate` 3 scaling_error,
//! 4 partially_correct, 5 shape_error, 6 runtime_error.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use commands::{ConfigError, EXIT_CONFIG};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match commands::dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<ConfigError>() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

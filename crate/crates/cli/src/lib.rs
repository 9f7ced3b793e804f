//! Command-line driver: experiment configs, subcommands and artifact output.

pub mod commands;
pub mod config;
pub mod output;

use clap::Parser;

pub use commands::{execute, Cli, Outcome};

/// Exit codes: 0 success, 1 error, 2 bound violation.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Violation) => 2,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

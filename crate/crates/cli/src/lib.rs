//! Command-line front end for `skewlat`.
//!
//! Argument parsing lives in [`args`], the subcommands in [`commands`], the
//! verification battery in [`verify`]. [`run`] turns a parsed command line
//! into an exit status plus the text to emit.

pub mod args;
pub mod commands;
pub mod json;
pub mod verify;

use std::fmt;

pub use args::Cli;

/// Exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_PARAMETER: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;

/// Default working precision when neither the flag nor the environment sets one.
pub const DEFAULT_PRECISION_BITS: usize = 256;
pub const PRECISION_ENV: &str = "SKEWLAT_PRECISION_BITS";

#[derive(Debug)]
pub enum CliError {
    Parameter(String),
    Convergence(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parameter(m) => write!(f, "parameter error: {m}"),
            CliError::Convergence(m) => write!(f, "{m}"),
        }
    }
}

impl From<skewlat::Error> for CliError {
    fn from(e: skewlat::Error) -> Self {
        if e.is_parameter_error() {
            CliError::Parameter(e.to_string())
        } else {
            CliError::Convergence(e.to_string())
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parameter(_) => EXIT_PARAMETER,
            CliError::Convergence(_) => EXIT_CONVERGENCE,
        }
    }
}

pub fn param(msg: impl Into<String>) -> CliError {
    CliError::Parameter(msg.into())
}

/// What a finished command hands back to `main`.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs a parsed command line; `env_precision` is the raw value of
/// `SKEWLAT_PRECISION_BITS`, if set.
pub fn run(cli: &Cli, env_precision: Option<&str>) -> Outcome {
    match commands::dispatch(cli, env_precision) {
        Ok(o) => o,
        Err(e) => Outcome { code: e.exit_code(), stdout: String::new(), stderr: format!("skewlat: {e}\n") },
    }
}

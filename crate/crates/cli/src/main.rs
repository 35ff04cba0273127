use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use skewlat_cli::{run, Cli, PRECISION_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env = std::env::var(PRECISION_ENV).ok();
    let out = run(&cli, env.as_deref());
    let _ = std::io::stdout().write_all(out.stdout.as_bytes());
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    ExitCode::from(out.code as u8)
}

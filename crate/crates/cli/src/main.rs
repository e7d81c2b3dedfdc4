mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use padic_salem::Error;

use commands::Outcome;
use config::{expand_config, Cli};

/// Errors in the inputs themselves, reported like usage errors.
fn is_usage(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidPrime(_)
            | Error::StandingAssumption { .. }
            | Error::InvalidParams(_)
            | Error::InvalidExponent(_)
            | Error::Parse(_)
            | Error::EmptyPrimeSet { .. }
    )
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}

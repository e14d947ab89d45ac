//! pulsefusion command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/configuration error,
//! 3 no pulsatile signal found.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use commands::{Cli, EXIT_DATA, EXIT_NO_SIGNAL, EXIT_OK, EXIT_USAGE};

fn main() -> ExitCode {
    let threads = match std::env::var("PULSEFUSION_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                eprintln!("error: PULSEFUSION_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(EXIT_USAGE);
            }
        },
        Err(_) => None,
    };
    if let Err(e) = pulsefusion::init_thread_pool(threads) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    match commands::run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<pulsefusion::Error>() {
                Some(e) if e.is_no_signal() => EXIT_NO_SIGNAL,
                Some(_) => EXIT_DATA,
                None => match err.downcast_ref::<commands::UsageError>() {
                    Some(_) => EXIT_USAGE,
                    None => EXIT_DATA,
                },
            };
            ExitCode::from(code)
        }
    }
}

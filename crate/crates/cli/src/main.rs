//! `tokvar`: simulate, ingest, and analyze run-to-run variation in token
//! probabilities caused by floating-point accumulation order.

mod args;
mod commands;
mod config_file;
mod report;

use clap::Parser;

use args::Cli;

/// Exit codes: 0 success, 1 usage error, 2 data/validation failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn usage(msg: impl std::fmt::Display) -> Self {
        CliError::Usage(msg.to_string())
    }

    fn data(msg: impl std::fmt::Display) -> Self {
        CliError::Data(msg.to_string())
    }
}

pub type CmdResult = Result<(), CliError>;

fn main() -> std::process::ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return std::process::ExitCode::SUCCESS;
            }
            let _ = e.print();
            return std::process::ExitCode::from(1);
        }
    };

    let outcome = match &cli.command {
        args::Command::Simulate(a) => run_pooled(a.workers, || commands::simulate::run(a)),
        args::Command::Analyze(a) => run_pooled(a.workers, || commands::analyze::run(a)),
        args::Command::Estimate(a) => run_pooled(None, || commands::estimate::run(a)),
        args::Command::Validate(a) => run_pooled(None, || commands::validate::run(a)),
    };

    match outcome {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            std::process::ExitCode::from(2)
        }
    }
}

/// Runs a command inside a rayon pool of the requested size. Results are
/// bitwise independent of the worker count; the flag only controls resource
/// use.
fn run_pooled<F: FnOnce() -> CmdResult + Send>(workers: Option<usize>, f: F) -> CmdResult {
    match workers {
        None | Some(0) => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(format!("cannot build worker pool: {e}")))?
            .install(f),
    }
}

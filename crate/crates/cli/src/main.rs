mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use flqr::FlqrError;

use args::Cli;

/// Exit 1 on usage or input problems, 2 when the numerics fail.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Flqr(FlqrError),
}

impl From<FlqrError> for CliError {
    fn from(e: FlqrError) -> Self {
        CliError::Flqr(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Flqr(e) if e.is_input_error() => 1,
            CliError::Flqr(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => format!("usage: {m}"),
            CliError::Io(m) => format!("io: {m}"),
            CliError::Flqr(e) => format!("{}: {e}", e.name()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(m) => {
            eprintln!("error: usage: {m}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: usage: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: io: cannot size the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

//! `dialogbench`: one binary wiring dataset validation, statistics,
//! candidate construction, baselines, evaluation, language-model analysis
//! and the collection server.
//!
//! Exit codes: 0 success, 1 invalid input or failed run, 2 usage error.

pub mod args;
mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;

use clap::Parser;
use thiserror::Error;

use args::{Cli, Command};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invalid(_) | CliError::Io(_) => 1,
        }
    }
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(e) => return report(e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let workers = command.common().workers;
    if workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    if let Command::Serve(a) = command {
        return commands::serve(a);
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Io(format!("cannot start worker threads: {e}")))?;
    pool.install(|| match command {
        Command::Validate(a) => commands::validate(a),
        Command::Stats(a) => commands::stats(a),
        Command::Candidates(a) => commands::candidates(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Rank(a) => commands::rank(a),
        Command::DialogEval(a) => commands::dialog_eval(a),
        Command::Lm(a) => commands::lm(a),
        Command::Topics(a) => commands::topics(a),
        Command::Synth(a) => commands::synth(a),
        Command::Serve(_) => unreachable!("handled above"),
    })
}

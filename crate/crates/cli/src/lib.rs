//! Command-line front end: POVM files in, deterministic reports out.
//!
//! Exit codes: 0 when the analysis completed (verdicts live in the report),
//! 1 on usage, parse or validation errors, 2 on numerical failure.

#![forbid(unsafe_code)]

pub mod args;
pub mod commands;
pub mod error;
pub mod povm_file;
pub mod report;
pub mod selfcheck;

use clap::Parser;

pub use args::Cli;
pub use error::{CliError, Result, EXIT_OK, EXIT_SOLVER, EXIT_USAGE};

/// Captured result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `args` (program name first), runs the command and renders the
/// report. Writes the report to `--output` when given.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome { code, stdout: String::new(), stderr: text }
            } else {
                Outcome { code, stdout: text, stderr: String::new() }
            };
        }
    };
    let failed = |e: CliError| Outcome {
        code: e.exit_code(),
        stdout: String::new(),
        stderr: format!("error: {e}\n"),
    };
    let report = match commands::execute(&cli) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let text = report.render(cli.format);
    match &cli.output {
        Some(path) => match std::fs::write(path, &text) {
            Ok(()) => Outcome { code: EXIT_OK, stdout: String::new(), stderr: String::new() },
            Err(source) => failed(CliError::Io { path: path.display().to_string(), source }),
        },
        None => Outcome { code: EXIT_OK, stdout: text, stderr: String::new() },
    }
}

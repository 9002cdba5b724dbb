//! Command-line front end for `chaosgen`.
//!
//! Exit codes: 0 on success, 2 when inputs fail validation (nothing is
//! written in that case), 1 when a run fails part-way.

pub mod commands;
pub mod config;

use std::fmt;

/// Why a command stopped.
#[derive(Debug)]
pub enum CliError {
    /// Bad inputs, detected before any output was produced.
    Invalid(Vec<String>),
    /// Failure while doing the work.
    Runtime(String),
}

impl CliError {
    pub fn invalid(msg: impl fmt::Display) -> Self {
        CliError::Invalid(vec![msg.to_string()])
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(errors) => {
                writeln!(f, "invalid input ({} problem{}):", errors.len(), if errors.len() == 1 { "" } else { "s" })?;
                for e in errors {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
            CliError::Runtime(msg) => writeln!(f, "error: {msg}"),
        }
    }
}

impl From<chaosgen::Error> for CliError {
    fn from(e: chaosgen::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<Vec<String>> for CliError {
    fn from(errors: Vec<String>) -> Self {
        CliError::Invalid(errors)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Extension for marking library errors as input problems.
pub trait Reject<T> {
    fn reject(self) -> CliResult<T>;
}

impl<T, E: fmt::Display> Reject<T> for Result<T, E> {
    fn reject(self) -> CliResult<T> {
        self.map_err(CliError::invalid)
    }
}

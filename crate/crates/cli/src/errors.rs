//! CLI error taxonomy with stable exit codes.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Exit 2: invalid configuration (unknown key, bad value, bad flag combination).
    Config(String),
    /// Exit 3: filesystem failure.
    Io(String),
    /// Exit 4: malformed data file or incompatible inputs.
    Data(String),
    /// Exit 5: tuning failure inside a fit.
    Tuning(String),
    /// Exit 6: benchmark finished with flagged cells.
    Benchmark(String),
    /// Exit 1: any other runtime failure.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
            CliError::Tuning(_) => 5,
            CliError::Benchmark(_) => 6,
            CliError::Other(_) => 1,
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> CliError {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Data(m) => write!(f, "data format error: {m}"),
            CliError::Tuning(m) => write!(f, "tuning failure: {m}"),
            CliError::Benchmark(m) => write!(f, "benchmark failure: {m}"),
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Map a core error arising while fitting or predicting.
pub fn from_core(e: ssflrd_core::Error) -> CliError {
    use ssflrd_core::Error as E;
    match e {
        E::Tuning(m) => CliError::Tuning(m),
        E::DimensionMismatch(m) | E::InvalidGrid(m) | E::NonFinite(m) => CliError::Data(m),
        other => CliError::Other(other.to_string()),
    }
}

pub type CliResult<T> = Result<T, CliError>;

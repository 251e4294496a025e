//! CLI error taxonomy: every failure maps to one of three exit codes so
//! scripted harnesses can distinguish configuration mistakes from data
//! problems from numerical failures.

use std::fmt;

use drcouple_core::Error as CoreError;

/// Failure class, which doubles as the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags, malformed config, invalid combinations. Exit 1.
    Config,
    /// Missing or malformed input data. Exit 2.
    Data,
    /// Numerical or convergence failure inside the pipeline. Exit 3.
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Data, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Numeric, message: message.into() }
    }

    /// Machine-readable JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind.name(),
                "code": self.kind.exit_code(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.message)
    }
}

impl std::error::Error for CliError {}

/// Pipeline errors arriving from the core are numerical by default; data
/// shape problems keep the data class.
pub fn from_core(e: CoreError) -> CliError {
    let kind = match &e {
        CoreError::Domain(_) | CoreError::Dimension(_) => ErrorKind::Data,
        _ => ErrorKind::Numeric,
    };
    CliError { kind, message: e.to_string() }
}

/// Core errors raised while running the numeric pipeline (as opposed to
/// loading data) are always the numeric class.
pub fn numeric_from_core(e: CoreError) -> CliError {
    CliError::numeric(e.to_string())
}

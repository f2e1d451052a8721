use std::fmt;
use std::io;

use label_audit::Error;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn argument(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind: "argument",
            message: msg.into(),
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        CliError {
            code: 3,
            kind: "format",
            message: msg.into(),
        }
    }

    pub fn undefined_metric(msg: impl Into<String>) -> Self {
        CliError {
            code: 5,
            kind: "undefined_metric",
            message: msg.into(),
        }
    }

    /// The single stderr line: `{"error":..,"code":..,"message":..}`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "code": self.code,
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, kind) = match &e {
            Error::Argument(_) => (2, "argument"),
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => (2, "argument"),
            Error::Format(_) | Error::Validation(_) | Error::Csv(_) | Error::Io(_) => (3, "format"),
            Error::Divergence { .. } | Error::Solver(_) => (4, "numeric"),
            Error::UndefinedScore(_) | Error::UndefinedMetric(_) => (5, "undefined_metric"),
        };
        CliError { code, kind, message }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::format(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

use std::process::ExitCode;

use serde_json::{json, Value};
use vortexlab::Error;

/// Everything that ends a command with a nonzero exit code.
#[derive(Debug)]
pub enum Failure {
    /// A check ran to completion and did not pass.
    Check(String),
    /// Bad flags, bad configuration or invalid input data.
    Usage(String),
    Io(String),
    /// The solver stopped, with the state at the time.
    Numerical { message: String, state: Value },
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) | Failure::Io(_) => 2,
            Failure::Numerical { .. } => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Check(_) => "check_failed",
            Failure::Usage(_) => "usage",
            Failure::Io(_) => "io",
            Failure::Numerical { .. } => "numerical_abort",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Usage(m) | Failure::Io(m) => m,
            Failure::Numerical { message, .. } => message,
        }
    }

    /// Writes the error JSON to stderr and returns the exit code.
    pub fn report(&self) -> ExitCode {
        let mut body = json!({
            "error": self.kind(),
            "message": self.message(),
            "exit_code": self.code(),
        });
        if let Failure::Numerical { state, .. } = self {
            body["state"] = state.clone();
        }
        eprintln!("{body}");
        ExitCode::from(self.code())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => Failure::Io(e.to_string()),
            Error::Cfl { .. } => Failure::Numerical { message: e.to_string(), state: Value::Null },
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

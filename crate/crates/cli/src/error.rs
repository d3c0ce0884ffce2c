use serde::Serialize;
use tmsv_core::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    NonConvergence,
    Degenerate,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::NonConvergence => 3,
            ErrorKind::Degenerate => 4,
            ErrorKind::Io => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Config, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Io, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// One-line JSON report for stderr.
    pub fn report(&self) -> String {
        serde_json::json!({
            "status": "error",
            "kind": self.kind,
            "exit_code": self.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::NonConvergence(_) => ErrorKind::NonConvergence,
            Error::Degenerate(_) => ErrorKind::Degenerate,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Config,
        };
        CliError { kind, message: e.to_string() }
    }
}

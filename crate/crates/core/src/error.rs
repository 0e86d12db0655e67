use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {message}")]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("feature error: {0}")]
    Feature(#[from] crate::fdsl::Diagnostic),

    #[error("probe error: {0}")]
    Probe(String),

    #[error("generator unreachable: {0}")]
    Generator(String),

    #[error("optimization diverged at step {step}: loss {loss} > 10x initial {initial}")]
    Diverged {
        step: usize,
        loss: f64,
        initial: f64,
        trace: Vec<crate::erasure::TraceStep>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Ingest { .. } | Error::Feature(_) | Error::Io { .. } | Error::Json(_) => 3,
            Error::Probe(_) | Error::Diverged { .. } => 3,
            Error::Generator(_) => 4,
            Error::Invariant(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Ingest { .. } => "ingest",
            Error::Feature(_) => "feature",
            Error::Probe(_) => "probe",
            Error::Generator(_) => "generator",
            Error::Diverged { .. } => "diverged",
            Error::Invariant(_) => "invariant",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

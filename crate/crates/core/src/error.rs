use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the domain the circuit or routine can handle.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The feedback circuit has a pole in the right half-plane.
    #[error("unstable circuit: minimum eigenvalue real part of M is {lambda_m_min:.6e}")]
    Unstable { lambda_m_min: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("generation failed after {tries} tries: {reason}")]
    Generation { tries: usize, reason: String },

    #[error("inversion failed at column {column}: {reason}")]
    Inversion { column: usize, reason: String },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::Io { .. } => 4,
            Error::Domain(_)
            | Error::Numerical(_)
            | Error::Unstable { .. }
            | Error::Generation { .. }
            | Error::Inversion { .. } => 3,
        }
    }
}

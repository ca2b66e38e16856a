use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node {node} cannot be attested: {reason}")]
    InvalidTarget { node: usize, reason: &'static str },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("station reserve {available:.3} J cannot supply {requested:.3} J")]
    InsufficientReserve { requested: f64, available: f64 },

    #[error("UAV needs {required:.3} J but holds {available:.3} J")]
    EnergyViolation { required: f64, available: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for configuration problems and unreadable inputs, 3 for
    /// violated runtime contracts, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGraph(_) | Error::Config(_) | Error::Json { .. } | Error::Checkpoint(_) => 2,
            Error::InvalidTarget { .. }
            | Error::Domain(_)
            | Error::InsufficientReserve { .. }
            | Error::EnergyViolation { .. }
            | Error::Contract(_)
            | Error::Shape { .. } => 3,
            Error::Io { .. } | Error::Csv { .. } => 1,
        }
    }
}

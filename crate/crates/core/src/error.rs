use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no data")]
    NoData,
    #[error("no runs")]
    NoRuns,
    #[error("unsupported depth: generator {generator}, discriminator {discriminator}")]
    UnsupportedDepth {
        generator: usize,
        discriminator: usize,
    },
    #[error("invalid genotype: {0}")]
    InvalidGenotype(String),
    #[error("run {run_id} has {count} individuals, need at least {needed}")]
    InsufficientRun {
        run_id: String,
        count: usize,
        needed: usize,
    },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("state space of {size} assignments exceeds cap {cap}")]
    StateSpaceTooLarge { size: u128, cap: u128 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("I/O error on {path}: {source}")]
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

    /// Validation failures map to exit code 1, I/O failures to 2.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

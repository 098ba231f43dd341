use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: dimension mismatch: {message}", file.display())]
    DimensionMismatch {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: negative cost {value}", file.display())]
    NegativeCost {
        file: PathBuf,
        line: usize,
        value: f64,
    },

    #[error("{}: statement column {column} is not covered by any test", file.display())]
    UncoverableStatement { file: PathBuf, column: usize },

    #[error("invalid suite: {0}")]
    InvalidSuite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("{n} qubits exceeds the engine cap of {cap}")]
    TooManyQubits { n: usize, cap: usize },

    #[error("cannot fit {tests} tests into {clusters} clusters of at most {max_size}")]
    InfeasibleCapacity {
        tests: usize,
        clusters: usize,
        max_size: usize,
    },

    #[error("points or fronts belong to different suites")]
    MixedSuites,

    #[error("{0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected, actual })
        }
    }
}

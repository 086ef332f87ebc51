use std::path::PathBuf;

/// Every failure the library reports.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid config at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("microgrid {mg} is infeasible; binding constraint family: {family}")]
    Infeasible { mg: String, family: String },

    #[error("market did not converge after {iterations} iterations (mismatch {mismatch:.3e} MW){hint}")]
    NonConvergence {
        iterations: usize,
        mismatch: f64,
        hint: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("quadratic cost is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("orthogonal array L8(2^7) supports 1 to 7 factors, got {0}")]
    UnsupportedFactors(usize),

    #[error("level matrix has {got} columns, expected {expected} (PSO plus one per microgrid)")]
    ColumnMismatch { expected: usize, got: usize },

    #[error("trading prices missing: {0}")]
    MissingPrices(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("sweep point {param} = {value}: {source}")]
    SweepPoint {
        param: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The underlying error with sweep annotations peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::SweepPoint { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

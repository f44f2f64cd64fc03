use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("need at least {needed} records, found {found}")]
    TooFewRecords { needed: usize, found: usize },
    #[error(
        "sample covariance is degenerate (determinant {det:e}); add covariance jitter or supply more varied data"
    )]
    DegenerateCovariance { det: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("the set kernel is undefined for an empty set")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite even with diagonal jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("hyperparameter search failed: no candidate produced a factorisable covariance")]
    FitFailed,
    #[error("point {point:?} is not strictly dominated by the reference point {reference:?}")]
    OutsideReference { point: Vec<f64>, reference: Vec<f64> },
    #[error("encoding: {0}")]
    Encoding(String),
    #[error("no feasible genome found")]
    NoFeasibleGenome,
    #[error("distribution file: {0}")]
    DistributionFormat(String),
    #[error("run state: {0}")]
    State(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

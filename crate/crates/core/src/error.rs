use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or missing input data, schema violations.
    Input,
    /// Non-finite values or failed numerical procedures.
    Numeric,
    /// Invalid settings.
    Config,
    /// Filesystem and serialization problems.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: cannot parse column `{column}` value {value:?}")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: {message}")]
    InvalidRecord { row: usize, message: String },

    #[error("column `{0}` has no observed values and cannot be imputed")]
    Unimputable(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("unknown vegetation index `{0}`")]
    UnknownIndex(String),

    #[error("{0}")]
    Domain(String),

    #[error("wavelength {wavelength} nm outside sampled range [{min}, {max}]")]
    Extrapolation { wavelength: f64, min: f64, max: f64 },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("node index {index} out of range for graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("non-finite coordinate for node {0}")]
    NonFiniteCoordinate(usize),

    #[error("no non-zero pairwise distance, cannot derive a spatial threshold")]
    NoPositiveDistance,

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::MissingColumn(_)
            | Error::ParseCell { .. }
            | Error::InvalidRecord { .. }
            | Error::Unimputable(_)
            | Error::UnknownColumn(_)
            | Error::UnknownIndex(_)
            | Error::NonFiniteCoordinate(_)
            | Error::NoPositiveDistance
            | Error::Csv(_) => ErrorClass::Input,
            Error::Domain(_)
            | Error::Extrapolation { .. }
            | Error::Shape { .. }
            | Error::NodeOutOfRange { .. }
            | Error::NonFiniteLoss { .. }
            | Error::Numeric(_) => ErrorClass::Numeric,
            Error::Config(_) => ErrorClass::Config,
            Error::Io { .. } | Error::Json(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

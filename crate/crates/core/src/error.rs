use thiserror::Error;

use crate::grid::CellIndex;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid dimensions {rows}x{cols} must be {need}")]
    InvalidDimensions { rows: usize, cols: usize, need: &'static str },

    #[error("cell ({row}, {col}) is outside the {rows}x{cols} grid")]
    CellOutOfBounds { row: usize, col: usize, rows: usize, cols: usize },

    #[error("path {path}: cells {from:?} and {to:?} are not 4-adjacent")]
    NonAdjacentStep { path: usize, from: CellIndex, to: CellIndex },

    #[error("path {path}: cell {cell:?} is visited more than once")]
    RepeatedCell { path: usize, cell: CellIndex },

    #[error("path {0} is empty")]
    EmptyPath(usize),

    #[error("invalid range query: {0}")]
    InvalidQuery(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative entry {value} in {component}")]
    NegativeEntry { component: &'static str, value: f64 },

    #[error("unsupported document version {0}")]
    UnsupportedVersion(u32),

    #[error("histogram has no per-path length metadata; ingest with normalization enabled")]
    MissingNormalization,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("trajectory {id}: {reason}")]
    Trajectory { id: String, reason: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("lp solver: {0}")]
    Solver(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse category used for machine-readable error reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidDimensions { .. }
            | Error::InvalidQuery(_)
            | Error::InvalidParameter(_)
            | Error::MissingNormalization => "validation",
            Error::CellOutOfBounds { .. }
            | Error::NonAdjacentStep { .. }
            | Error::RepeatedCell { .. }
            | Error::EmptyPath(_)
            | Error::Trajectory { .. } => "data",
            Error::DimensionMismatch(_)
            | Error::NegativeEntry { .. }
            | Error::UnsupportedVersion(_)
            | Error::Csv(_)
            | Error::Json(_) => "format",
            Error::Solver(_) => "numerical",
            Error::Io(_) => "io",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

use crate::fastica::MixingEstimate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vector is not unit norm (norm = {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("dimension {d} exceeds the dense limit {max}")]
    TooLargeForDense { d: usize, max: usize },

    #[error("operator is not symmetric (relative defect {defect:.3e})")]
    Asymmetric { defect: f64 },

    #[error("bisection did not converge after {iterations} iterations (bracket width {width:.3e})")]
    NoConvergence { iterations: usize, width: f64 },

    #[error("fixed-point update collapsed to the zero vector")]
    DegenerateUpdate,

    #[error("covariance is numerically singular: eigenvalue {index} = {value:.3e} is below the floor {floor:.3e}")]
    SingularCovariance { index: usize, value: f64, floor: f64 },

    #[error("source {component} has zero excess kurtosis; variance formulas are undefined")]
    ZeroKurtosis { component: usize },

    #[error("|a_ij| = {value} is too close to 1")]
    EntryTooCloseToOne { value: f64 },

    #[error("deflated data lost rank before component {component} of {d}")]
    RankCollapse {
        component: usize,
        d: usize,
        partial: Box<MixingEstimate>,
    },

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the numerics rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Asymmetric { .. }
                | Error::NoConvergence { .. }
                | Error::DegenerateUpdate
                | Error::SingularCovariance { .. }
                | Error::ZeroKurtosis { .. }
                | Error::EntryTooCloseToOne { .. }
                | Error::RankCollapse { .. }
        )
    }
}

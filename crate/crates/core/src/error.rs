use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("rows are not orthonormal (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid sketch: {0}")]
    InvalidSketch(String),

    #[error("sketched matrix is rank deficient (min singular value {min_sv:e}, max {max_sv:e})")]
    RankDeficient { min_sv: f64, max_sv: f64 },

    #[error("normal matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("conjugate gradient breakdown at iteration {iteration}: curvature {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("inner iteration diverged at step {iteration}")]
    Diverged { iteration: usize },

    #[error("correction identity violated: residual {residual:e} exceeds {bound:e}")]
    CorrectionIdentityViolated { residual: f64, bound: f64 },

    #[error("interior point method stalled at outer iteration {iteration}")]
    Stalled { iteration: usize },

    #[error("outer iteration limit {limit} reached")]
    MaxOuterExceeded { limit: usize },

    #[error("schema violation in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("no stabilizing solution: {0}")]
    NoStabilizingSolution(String),

    #[error("solution not positive definite")]
    NotPositiveDefinite,

    #[error("no feasible γ in search range [{lo}, {hi}]")]
    NoFeasibleGamma { lo: f64, hi: f64 },

    #[error("input-matrix normalization violated: λ_max(BBᵀ) = {0} > 1")]
    InputNormalization(f64),

    #[error("divergence detected at t = {t}")]
    Divergence { t: f64 },

    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CateError>;

#[derive(Debug, Error)]
pub enum CateError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("all regression weights are zero")]
    ZeroWeights,

    #[error("fold {fold}: training partition for {nuisance} has no {missing} rows")]
    DegenerateFold {
        fold: usize,
        nuisance: &'static str,
        missing: &'static str,
    },

    #[error("ill-conditioned local window: lambda_min {lambda_min:e} below tolerance {tol:e} ({n_in_window} points in window)")]
    IllConditioned {
        lambda_min: f64,
        tol: f64,
        n_in_window: usize,
    },

    #[error("pseudo-outcome kind {0} has no closed-form conditional variance")]
    UnsupportedKind(&'static str),

    #[error("learner requires simulation ground truth but none was supplied")]
    MissingTruth,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

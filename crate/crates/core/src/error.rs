use thiserror::Error;

/// Errors raised by the estimation, identification and resampling routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpvarError {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("restricted design is singular or ill-conditioned (condition number {condition:.3e}); offending season blocks: {seasons:?}")]
    Singular { condition: f64, seasons: Vec<usize> },

    #[error("long-run response undefined: spectral radius {radius} is not below 1")]
    NotStationary { radius: f64 },

    #[error("covariance matrix of season {season} is not positive definite")]
    NotPositiveDefinite { season: usize },

    #[error("insufficient cycles for df correction in season {season}: N = {cycles}, k(s) = {free}")]
    InsufficientCycles { season: usize, cycles: usize, free: usize },

    #[error("identification failed in season {season}: restriction residual {residual:.3e}")]
    Identification { season: usize, residual: f64 },

    #[error("impact too small to normalize (season {season}, value {value:.3e})")]
    NormalizationTooSmall { season: usize, value: f64 },

    #[error("{failed} of {total} bootstrap replicates failed, above the 5% limit")]
    TooManyFailures { failed: usize, total: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl SpvarError {
    /// Coarse category used by the command-line front end for exit codes.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SpvarError::Singular { .. }
                | SpvarError::NotStationary { .. }
                | SpvarError::NotPositiveDefinite { .. }
                | SpvarError::InsufficientCycles { .. }
                | SpvarError::Identification { .. }
                | SpvarError::NormalizationTooSmall { .. }
                | SpvarError::TooManyFailures { .. }
                | SpvarError::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SpvarError>;

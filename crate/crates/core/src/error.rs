use thiserror::Error;

use crate::dataset::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dataset violates the interpolation assumptions: {0}")]
    Dataset(#[from] Violation),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("construction failed in step `{step}`: {detail}")]
    Construction { step: &'static str, detail: String },

    #[error("temperature calibration failed after {halvings} halvings: {detail}")]
    Calibration { halvings: u32, detail: String },

    #[error("iteration did not converge after {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("training diverged at step {step} (objective {value:e})")]
    Divergence { step: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn construction(step: &'static str, detail: impl Into<String>) -> Self {
        Error::Construction {
            step,
            detail: detail.into(),
        }
    }
}

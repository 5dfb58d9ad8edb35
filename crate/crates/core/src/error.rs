use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("transmit-noise variance is zero; the effective prior is a sum of point masses")]
    PointMassPrior,

    #[error("numerical tolerance exceeded: {0}")]
    Tolerance(String),

    #[error("detector diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("whitening failed: {0}")]
    Whitening(String),

    #[error("threshold computation inconsistent: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

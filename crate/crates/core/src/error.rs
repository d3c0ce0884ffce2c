use thiserror::Error;

/// Errors produced by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncation deficit {deficit:.3e} exceeds the allowed {allowed:.3e}")]
    Truncation { deficit: f64, allowed: f64 },

    #[error("displacement leakage {leakage:.3e} exceeds {bound:.1e} at n_max = {n_max}")]
    Leakage { leakage: f64, bound: f64, n_max: usize },

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the analysed data rather than by the caller.
    pub fn is_analysis_degeneracy(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::NonConvergence(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

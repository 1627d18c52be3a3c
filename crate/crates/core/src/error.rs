use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Fock cutoff must be at least 1 (got {0})")]
    InvalidCutoff(usize),

    #[error("Fock level {level} exceeds cutoff n_max = {n_max}")]
    InvalidLevel { level: usize, n_max: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cutoff n_max = {n_max} too small: {reason}")]
    CutoffTooSmall { n_max: usize, reason: String },

    #[error("joint dimension {dim} exceeds the configured maximum {max}")]
    Resource { dim: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("truncation tail guard violated: occupation {occupation:.3e} of the top {levels} Fock levels exceeds {limit:.1e}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    TailGuard {
        occupation: f64,
        levels: usize,
        limit: f64,
        step: Option<usize>,
    },

    #[error("not a valid density matrix: {0}")]
    InvalidState(String),

    #[error("unphysical state: {0}")]
    Unphysical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

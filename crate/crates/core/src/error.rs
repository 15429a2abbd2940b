use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside its domain: {reason}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("truncation is too small: {0}")]
    Truncation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("requested dimension {requested} exceeds the configured cap {cap}")]
    Resource { requested: usize, cap: usize },

    #[error(
        "level tracking is ambiguous for {label} at step {step}: best overlap {best:.4}, runner-up {second:.4}"
    )]
    LevelAmbiguity {
        label: String,
        step: usize,
        best: f64,
        second: f64,
    },

    #[error("retained quasi-eigenbasis captures {captured:.6} of the initial state, need {required}")]
    BasisCapture { captured: f64, required: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("matrix is singular or ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("drive is bistable at P = {power:e} W: {roots} self-consistent photon numbers")]
    Bistable { power: f64, roots: usize },

    #[error("fit is underdetermined: {0}")]
    Underdetermined(String),

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::ParameterDomain {
            name,
            value,
            reason,
        }
    }
}

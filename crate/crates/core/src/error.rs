use thiserror::Error;

/// Errors raised by the landscape, spectral, dynamics and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("potential evaluation failed: {0}")]
    Evaluation(String),

    #[error("trajectory diverged at t = {t} (|x| = {norm:e})")]
    Divergence { t: f64, norm: f64 },

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("energy {energy} is ambiguous between catalog entries {first} and {second}")]
    AmbiguousMatch {
        energy: f64,
        first: usize,
        second: usize,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad hyperparameter, shape mismatch, or an
    /// incompatible loss/method pairing.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input data (IDX or AER parsing, dimension checks).
    #[error("data error: {0}")]
    Data(String),

    /// Training diverged: a non-finite loss or gradient was produced.
    #[error("divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    /// A non-finite value appeared in a backward pass.
    #[error("non-finite gradient in layer {layer} at step {step}")]
    NonFiniteGradient { layer: usize, step: usize },

    /// A verification oracle failed (equivalence sweep, gradient check).
    #[error("verification failure: {0}")]
    Verification(String),

    /// Numerical rank too low for the requested decomposition.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(format!("config file parse error: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

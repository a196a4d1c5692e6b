//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or precondition violation.
    #[error("config error: {0}")]
    Config(String),

    /// Shape disagreement between two values that must align.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// The policy gradient overflowed; the update was aborted.
    #[error("non-finite policy gradient in {layer}; update aborted")]
    GradientOverflow { layer: String },

    /// A trainee produced a non-finite loss or parameter.
    #[error("trainee diverged: {0}")]
    Divergence(String),

    /// Broadcast between trainees built from different specs.
    #[error("trainee spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 for usage/config problems, 2 for
    /// runtime failures such as divergence.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Dimension(_) | Error::Io(_) | Error::Json(_) => 1,
            Error::NonFinite(_)
            | Error::GradientOverflow { .. }
            | Error::Divergence(_)
            | Error::SpecMismatch(_) => 2,
        }
    }
}

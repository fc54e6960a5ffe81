use thiserror::Error;

/// Errors surfaced by simulation building blocks.
///
/// `Domain` covers arguments outside their physical or mathematical range;
/// `GridMismatch` covers fields that cannot be combined because their sampling
/// disagrees. Configuration problems collect every offending field so a user
/// can fix them in one pass.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("requested retinal pitch unreachable: {0}")]
    PitchUnreachable(String),
    #[error("field of view exceeded: {0}")]
    FieldOfView(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn grid(msg: impl Into<String>) -> Self {
        Error::GridMismatch(msg.into())
    }

    pub fn pitch_unreachable(msg: impl Into<String>) -> Self {
        Error::PitchUnreachable(msg.into())
    }

    pub fn field_of_view(msg: impl Into<String>) -> Self {
        Error::FieldOfView(msg.into())
    }
}

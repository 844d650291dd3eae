use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The conclusive probability vanishes, so the QBER has no defined value.
    #[error("QBER undefined: conclusive probability is zero")]
    UndefinedQber,

    /// No efficiency in [0, 1] produces a Bell violation for the given data.
    #[error("no Bell violation at any efficiency: {0}")]
    NoViolation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bracket does not enclose a sign change: {0}")]
    Bracket(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

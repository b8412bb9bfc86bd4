//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. The variants map onto the
//! process exit codes used by the CLI: everything except [`Error::Resource`]
//! is a validation failure (exit 2); `Resource` means the requested
//! computation exceeds a configured budget (exit 3).

/// Typed error for the whole crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric argument is outside the mathematically meaningful range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimensions or lengths of the inputs do not match.
    #[error("shape error: {0}")]
    Shape(String),

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed textual input; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An invalid configuration, annotated with the stage or knob at fault.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested computation exceeds a resource budget.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

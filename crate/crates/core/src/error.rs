use thiserror::Error;

/// Errors produced by problem construction, oracles and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    Validation(String),

    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange { what: &'static str, index: usize, size: usize },

    #[error("unsupported problem: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate certificate: {0}")]
    DegenerateCertificate(String),

    #[error("no iterate inside the dual domain")]
    EmptyDomainSet,

    #[error("traces are not comparable: {0}")]
    MismatchedTraces(String),
}

pub type Result<T> = std::result::Result<T, Error>;

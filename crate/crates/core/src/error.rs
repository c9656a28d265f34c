use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("invalid parameter {name}: {msg}")]
    Parameter { name: &'static str, msg: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("quality violation: {0}")]
    Quality(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn param(name: &'static str, msg: impl Into<String>) -> Self {
        Error::Parameter { name, msg: msg.into() }
    }
}

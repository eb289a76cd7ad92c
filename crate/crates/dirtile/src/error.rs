use thiserror::Error;

/// Crate-wide error. The CLI maps each variant to an exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration value is out of range. `field` is the dotted config path.
    #[error("config error in {field}: {msg}")]
    Config { field: String, msg: String },
    /// Two objects built on different grids or lattices were combined.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A numerical procedure missed its tolerance.
    #[error("accuracy error in {what}: achieved {achieved:e}, tolerance {tolerance:e}")]
    Accuracy {
        what: String,
        achieved: f64,
        tolerance: f64,
    },
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn config(field: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

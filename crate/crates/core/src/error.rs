use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pole: {0}")]
    Pole(String),
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("series does not converge: {0}")]
    Divergence(String),
    #[error("index out of range: {0}")]
    Range(String),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("support touches the truncation edge at {0}")]
    Support(String),
    #[error("function is not symmetric under lambda -> 1/lambda at {0}")]
    Symmetry(String),
    #[error("contour integral unstable: {0}")]
    Contour(String),
    #[error("degenerate spectral pair: {0}")]
    Degenerate(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

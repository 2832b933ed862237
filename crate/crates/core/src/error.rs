use thiserror::Error;

/// Errors produced by the sampling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid target specification: {0}")]
    InvalidSpec(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("point {coord:?} lies outside the grid domain")]
    OutOfDomain { coord: Vec<f64> },

    #[error("probability {0} is outside (0, 1)")]
    Domain(f64),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("eigensolver did not converge: {0}")]
    Solver(String),

    #[error("spectral basis retained no modes")]
    EmptyBasis,

    #[error("flow step unstable: {0}")]
    Unstable(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("basis cache error: {0}")]
    Cache(String),

    #[error("run aborted at iteration {iteration}, particle {particle}: {reason}")]
    Aborted {
        iteration: usize,
        particle: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid adjacency matrix: {0}")]
    Adjacency(String),

    #[error("node index {index} out of range for a network of {nodes} nodes")]
    NodeIndex { index: usize, nodes: usize },

    #[error("probability {0} outside [0, 1]")]
    Probability(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series of length {len} is too short for lag order {lags}")]
    ShortSeries { len: usize, lags: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular or ill-conditioned system (condition number {condition:.3e}); near-dependent columns: {columns:?}")]
    Singular { condition: f64, columns: Vec<String> },

    #[error("parameters are not stationary (margin {0:.6} >= 1)")]
    NonStationary(f64),

    #[error("response function overflow at linear predictor {0}")]
    Saturation(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NonStationary(_)
                | Error::Saturation(_)
                | Error::Numerical(_)
        )
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

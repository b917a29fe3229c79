use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not reach the requested accuracy (value {value:e}, error estimate {error:e})")]
    AccuracyNotReached { value: f64, error: f64 },

    #[error("query {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid interval ({a}, {b}): need 0 <= a < b < inf")]
    InvalidInterval { a: f64, b: f64 },

    #[error("open set covers all of (0, inf); its complement is empty")]
    ComplementEmpty,

    #[error("open set part ({0}, inf) is unbounded")]
    Unbounded(f64),

    #[error("invalid open set: {0}")]
    InvalidOpenSet(String),

    #[error("min level {min_level} is too coarse for a part of length {part_len}")]
    MinLevelTooCoarse { min_level: i32, part_len: f64 },

    #[error("invalid measure at {field}: {reason}")]
    InvalidMeasure { field: String, reason: String },

    #[error("level-set grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

use thiserror::Error;

use crate::params::Param;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{param} = {value} lies outside [{min}, {max}]")]
    OutOfRange {
        param: Param,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid layout parameters: {0}")]
    InvalidParams(String),

    #[error("invalid parameter grid: {0}")]
    InvalidGrid(String),

    #[error("invalid chart data: {0}")]
    InvalidData(String),

    #[error("cannot render chart: {0}")]
    Render(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no feasible layout satisfies the constraints")]
    NoSolution,

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

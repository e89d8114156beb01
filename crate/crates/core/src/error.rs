use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at node {node} (t = {time} s)")]
    NonFinite { node: usize, time: f64 },

    #[error("sub-step underflow at t = {time} s: dt_sub = {dt_sub:e} s < {dt_min:e} s")]
    Stiffness { time: f64, dt_sub: f64, dt_min: f64 },

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("scheduling failed: {0}")]
    Scheduling(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("schema error in {path}: {msg}")]
    Schema { path: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad input files or configuration rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Schema { .. }
                | Error::Io { .. }
                | Error::Consistency(_)
        )
    }
}

//! Error type shared across the crate.
//!
//! Variants are grouped by who is at fault: `Config` for bad settings,
//! `Data` for malformed or inconsistent inputs, `Numerical` for runtime
//! failures of the math (divergence, undefined ratios, shape bugs), and
//! `Io` for filesystem trouble.  The CLI maps the groups onto distinct
//! exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad field values, inconsistent dimensions,
    /// unknown keys.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data (CSV problems carry
    /// 1-based row/column coordinates in the message).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure at runtime: non-finite loss, undefined ratio,
    /// shape mismatch inside the math kernels.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

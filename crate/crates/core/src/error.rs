//! Error type shared across the crate.
//!
//! Variants map onto the process exit codes used by the command-line
//! frontend: configuration problems exit with 2, data problems (malformed
//! CSV, missing files, broken model files) exit with 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: unknown keys, out-of-range values, bad flags.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// A model file that cannot be parsed or does not match its header.
    #[error("model error: {0}")]
    Model(String),

    /// Underlying I/O failure (missing file, permission, short write).
    #[error("io error: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration errors,
    /// 3 for everything data-shaped.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Model(_) | Error::Io { .. } => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Pipeline driver behind the `elastid` binary: layered configuration,
//! plain-text artifact formats, run manifests with content digests, and the
//! command implementations themselves.
//!
//! Everything a command does is exposed as a library function so integration
//! tests exercise the exact code path the binary runs.

pub mod config;
pub mod formats;
pub mod manifest;
pub mod pipeline;

use std::path::Path;

/// Process-level failure classes, mapped to exit codes at the binary edge.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, malformed flag values, inconsistent configuration.
    #[error("{0}")]
    Usage(String),
    /// Numerics: solver divergence, training blow-up, estimator failure.
    #[error(transparent)]
    Numeric(#[from] elastid_core::Error),
    /// Filesystem trouble: missing inputs, unwritable outputs.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// A file exists but does not parse as the expected format.
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl CliError {
    /// Exit code contract: 0 success, 2 usage, 3 numeric failure, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io { .. } | CliError::Format { .. } => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format { path: path.display().to_string(), message: message.into() }
    }

    /// Reclassify validation failures of user-supplied values as usage
    /// errors; other core errors stay numeric.
    pub fn usage_from(err: elastid_core::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

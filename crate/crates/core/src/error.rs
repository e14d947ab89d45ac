use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error type.
///
/// `NoPulsatileRegion` and `NoEstimate` are deliberate failure signals (the
/// scene carries no usable pulse), distinct from data or configuration
/// errors; callers map them to their own failure semantics (the CLI uses
/// exit code 3 for them and 2 for everything else).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("region {region}: {source}")]
    Region {
        region: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no pulsatile region: {0}")]
    NoPulsatileRegion(String),

    #[error("no heart-rate estimate: {0}")]
    NoEstimate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid data at byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
}

impl Error {
    /// Wraps an error with the region index it occurred in.
    pub fn for_region(self, region: usize) -> Self {
        Error::Region {
            region,
            source: Box::new(self),
        }
    }

    /// True for "the scene holds no usable pulse" outcomes, as opposed to
    /// malformed data or configuration.
    pub fn is_no_signal(&self) -> bool {
        match self {
            Error::NoPulsatileRegion(_) | Error::NoEstimate(_) => true,
            Error::Region { source, .. } => source.is_no_signal(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

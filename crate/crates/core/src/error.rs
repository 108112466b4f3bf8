use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resolution {0}° does not evenly divide both 180° and 360°")]
    Resolution(f64),

    #[error("invalid spheroid: {0}")]
    Spheroid(String),

    #[error("invalid latitude band [{lo}, {hi}]")]
    Band { lo: f64, hi: f64 },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("conflicting entries: {0}")]
    Conflict(String),

    #[error("incomplete metadata: {0}")]
    Completeness(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("fingerprint mismatch: {0}")]
    Fingerprint(String),

    #[error("corrupt file {path}: {msg}")]
    Corrupt { path: PathBuf, msg: String },

    #[error("size mismatch: {0}")]
    Size(String),

    #[error("missing truth for valid time(s): {0}")]
    MissingTruth(String),

    #[error("unknown stratum `{0}`")]
    UnknownStratum(String),

    #[error("lead time {0}h not present in bundle")]
    UnknownLead(u32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by user input or configuration rather than a bug.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io { .. })
            || matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

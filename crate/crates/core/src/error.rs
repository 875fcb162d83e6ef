use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("coordinate transform {from} -> {to} failed at ({x}, {y})")]
    Transform {
        from: String,
        to: String,
        x: f64,
        y: f64,
    },

    #[error("unsupported CRS `{0}`")]
    UnsupportedCrs(String),

    #[error("HTTP request to {url} failed: {reason}")]
    Http { url: String, reason: String },

    #[error("rate limited by {url}; retry after {retry_after_s:?} s")]
    RateLimited {
        url: String,
        retry_after_s: Option<u64>,
    },

    #[error("unexpected content type `{content_type}` from {url}")]
    ContentType { url: String, content_type: String },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("tile {tile_id} failed in stage `{stage}`: {source}")]
    Stage {
        tile_id: u64,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Network,
    Data,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnsupportedCrs(_) => ErrorKind::Config,
            Error::Http { .. } | Error::RateLimited { .. } | Error::ContentType { .. } => {
                ErrorKind::Network
            }
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn stage(tile_id: u64, stage: &'static str, source: Error) -> Self {
        Error::Stage {
            tile_id,
            stage,
            source: Box::new(source),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        Error::Data(e.to_string())
    }
}

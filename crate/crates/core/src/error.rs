use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("scene {scene}: {path}:{line}: {msg}")]
    Parse {
        scene: String,
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("scene {scene}: point ({x}, {y}) out of bounds for {width}x{height} scene")]
    OutOfBounds {
        scene: String,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("pool: {0}")]
    Pool(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("results: {0}")]
    Results(String),

    #[error("trial {trial}, cycle {cycle}: {source}")]
    Trial {
        trial: usize,
        cycle: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid mesh: {0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfBounds { u: f64, v: f64, width: usize, height: usize },

    #[error("mismatched input: {0}")]
    MismatchedInput(String),

    #[error("bad threshold: {0}")]
    BadThreshold(String),

    #[error("unsupported hole loop: {0}")]
    UnsupportedLoop(String),

    #[error("inpainting backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("inpainting backend error (status {status}): {message}")]
    BackendError { status: u16, message: String },

    #[error("atlas overflow: needs {needed}px but max is {max}px; lower the texel density")]
    AtlasOverflow { needed: usize, max: usize },

    #[error("mask has no true pixels")]
    EmptyMask,

    #[error("invalid scene spec: {0}")]
    Spec(String),

    #[error("missing output: {0}")]
    MissingOutput(String),

    #[error("refusing furnished input: {0}")]
    RefusesFurnished(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("image codec error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, found {found}")]
    Length { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("trace identity mismatch: ({0}, {1}) vs ({2}, {3})")]
    Identity(u32, u32, u32, u32),

    #[error("window [{lo}, {hi}] out of range")]
    Range { lo: usize, hi: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite activation at layer {layer} ({kind})")]
    Numeric { layer: usize, kind: &'static str },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("bad format: {0}")]
    Format(String),

    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },

    #[error("unsupported {what} version {found} (supported: {supported})")]
    Version {
        what: &'static str,
        found: u32,
        supported: u32,
    },

    #[error("empty dataset: {0}")]
    Empty(&'static str),

    #[error("dataset has no {0} block")]
    MissingBlock(&'static str),

    #[error("training and validation sets share {0} samples")]
    Overlap(usize),

    #[error("unknown pad id {0}")]
    UnknownPad(u32),

    #[error("duplicate pad id {0}")]
    DuplicatePad(u32),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid target {target} for scene with {objects} objects")]
    InvalidTarget { target: usize, objects: usize },
    #[error("unknown category: {0}")]
    InvalidCategory(String),
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error("game sets differ; missing ids: {missing:?}")]
    Join { missing: Vec<String> },
    #[error("config error: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
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
}

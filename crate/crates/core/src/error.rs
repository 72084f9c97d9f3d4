use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge ({src}, {dst}) out of range for {num_nodes} nodes")]
    EdgeOutOfRange {
        src: usize,
        dst: usize,
        num_nodes: usize,
    },
    #[error("label {label} at node {node} outside [0, {num_classes})")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("graph too small: {0}")]
    TooSmall(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("parameter schema mismatch: {0}")]
    Schema(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("malformed {file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{0}")]
    Invalid(String),
    #[error("round {round}, client {client}: {source}")]
    Round {
        round: usize,
        client: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

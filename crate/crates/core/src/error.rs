use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("node id {id} out of range (num_nodes = {num_nodes})")]
    NodeOutOfRange { id: usize, num_nodes: usize },

    #[error("hyperedge {0} has no members")]
    EmptyHyperedge(usize),

    #[error("hyperedge {edge} lists node {node} more than once")]
    DuplicateMember { edge: usize, node: usize },

    #[error("feature matrix has {rows} rows but the hypergraph has {num_nodes} nodes")]
    FeatureRowMismatch { rows: usize, num_nodes: usize },

    #[error("hyperedge weight {index} is {value}; weights must be positive and finite")]
    InvalidWeight { index: usize, value: f64 },

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hypergraph has no labels")]
    MissingLabels,

    #[error("class {class} never appears in a training split after {retries} retries")]
    ClassAbsent { class: usize, retries: usize },

    #[error("training diverged at epoch {epoch}: {breakdown}")]
    Diverged { epoch: usize, breakdown: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

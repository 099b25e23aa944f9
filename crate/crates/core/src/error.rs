use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid sparse matrix: {0}")]
    InvalidSparse(String),

    #[error("no interactions")]
    NoInteractions,

    #[error("node {0} has zero degree")]
    IsolatedNode(usize),

    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("empty input file")]
    EmptyInput,

    #[error("k-core eliminated all data")]
    KCoreEmpty,

    #[error("cannot sample negative: user {0} interacted with every item")]
    CannotSampleNegative(u32),

    #[error("spread requires small graph: {nodes} nodes exceeds cap {cap}")]
    GraphTooLarge { nodes: usize, cap: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("id {id} out of range for {what} (size {size})")]
    OutOfRange { what: &'static str, id: usize, size: usize },

    #[error("divergence detected: {0}")]
    Divergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no records")]
    NoRecords,

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid record {record}: {message}")]
    Record { record: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid count query: {0}")]
    Query(String),

    #[error("contingency table for {vars} variables needs {cells} cells, above the ceiling of {ceiling}")]
    TableTooLarge {
        vars: usize,
        cells: u128,
        ceiling: usize,
    },

    #[error("no family score for node {node} with parents {parents:?}")]
    MissingFamily { node: usize, parents: Vec<usize> },

    #[error("network has a directed cycle through node {0}")]
    Cyclic(usize),

    #[error("network has no conditional probability tables")]
    MissingCpts,

    #[error("invalid network: {0}")]
    Network(String),

    #[error("record {record} has zero probability at node {node}")]
    ZeroProbability { record: usize, node: usize },

    #[error("family cache mismatch: {0}")]
    CacheMismatch(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::NoRecords => "no_records",
            Error::Schema(_) => "schema",
            Error::Record { .. } => "record",
            Error::Config(_) => "config",
            Error::Query(_) => "query",
            Error::TableTooLarge { .. } => "table_too_large",
            Error::MissingFamily { .. } => "missing_family",
            Error::Cyclic(_) => "cyclic",
            Error::MissingCpts => "missing_cpts",
            Error::Network(_) => "network",
            Error::ZeroProbability { .. } => "zero_probability",
            Error::CacheMismatch(_) => "cache_mismatch",
        }
    }
}

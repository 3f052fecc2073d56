use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("data error: {0}")]
    Data(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("node table error in tree {tree}, node {node}: {message}")]
    NodeTable {
        tree: usize,
        node: usize,
        message: String,
    },

    #[error("condition parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("empty condition: {0}")]
    EmptyCondition(String),

    #[error("uncovered condition: no instance satisfies `{0}`")]
    Uncovered(String),

    #[error("unknown level for variable X{var}")]
    UnknownLevel { var: usize },
}

impl Error {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

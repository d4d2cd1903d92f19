use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure at iteration {iteration}: {detail}")]
    Numerical { iteration: usize, detail: String },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error in parameter `{param}`: {detail}")]
    Training { param: String, detail: String },

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("undefined reference: {0}")]
    UndefinedReference(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("output error: {0}")]
    Output(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failures decoding a `.ssdu` container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u32),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("truncated file: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown dtype code {0}")]
    BadDtype(u8),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("missing record `{0}`")]
    MissingRecord(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for failures rooted in numerics (CG breakdown, non-finite values).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::Training { .. })
    }
}

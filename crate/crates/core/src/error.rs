use std::io;

use thiserror::Error;

/// A single rejected configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub reason: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("no baskets")]
    NoBaskets,

    #[error("catalog needs at least two items, found {0}")]
    CatalogTooSmall(usize),

    #[error("need at least two baskets to split, found {0}")]
    TooFewBaskets(usize),

    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),

    #[error("empty context")]
    EmptyContext,

    #[error("item index {index} out of range for catalog of {catalog_size}")]
    ItemOutOfRange { index: usize, catalog_size: usize },

    #[error("nce requires noise support (item {item} has zero noise probability)")]
    NceNoiseSupport { item: usize },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("reports cover different instance sets")]
    MismatchedInstances,

    #[error("catalog mismatch: {0}")]
    CatalogMismatch(String),

    #[error("invalid configuration: {}", join_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("malformed data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config(vec![ConfigIssue {
            field: field.into(),
            reason: reason.into(),
        }])
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidFraction(_) | Error::InvalidInput(_) => 2,
            Error::Divergence(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

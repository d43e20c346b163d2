use std::io;

use thiserror::Error;

pub type Result<T, E = GlpmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GlpmError {
    #[error("{source_name}, line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("node index {node} out of range for a network on {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },

    #[error("duplicate dyad {{{i}, {j}}}")]
    DuplicateDyad { i: usize, j: usize },

    #[error("covariate category {category} outside 1..={categories}")]
    CovariateOutOfRange { category: usize, categories: usize },

    #[error("edge {{{i}, {j}}} lies on an unobserved dyad")]
    EdgeOnUnobservedDyad { i: usize, j: usize },

    #[error("covariate file does not declare the category count (expected a `#C=<int>` header)")]
    MissingCategoryCount,

    #[error("matrix is not positive definite: non-positive pivot at index {pivot}")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("network has {n} nodes; brute-force enumeration supports at most {max}")]
    TooLargeToEnumerate { n: usize, max: usize },

    #[error("series of length {len} is too short (need at least {min})")]
    SeriesTooShort { len: usize, min: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("chains were not fitted to the same network and dyad sample")]
    ChainMismatch,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl GlpmError {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        GlpmError::Parse {
            source_name: source_name.to_owned(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        GlpmError::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

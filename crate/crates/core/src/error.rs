use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("query has no relations")]
    EmptyQuery,
    #[error("domain mismatch for `{attr}`: {detail}")]
    DomainMismatch { attr: String, detail: String },
    #[error("duplicate relation name `{0}`")]
    DuplicateRelation(String),
    #[error("query is cyclic")]
    CyclicQuery,
    #[error("invalid join tree: {0}")]
    InvalidTree(String),
    #[error("`{0}` is not reducible for `{1}`")]
    NotReducible(String, String),
    #[error("`{0}` is not dangling-free")]
    NotDanglingFree(String),
    #[error("invalid hypertree decomposition: {0}")]
    InvalidGhd(String),
    #[error("no valid join tree: {0}")]
    NoValidTree(String),
    #[error("missing relation `{0}`")]
    MissingRelation(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("semiring `{0}` has no SQL rendering")]
    UnsupportedSemiring(String),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Data { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

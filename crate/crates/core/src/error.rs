use std::path::PathBuf;

use thiserror::Error;

/// Coarse error category, used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Data,
    Config,
    Infeasible,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("document {doc_id}: span out of bounds: [{start}, {end}) with {len} tokens")]
    SpanOutOfBounds {
        doc_id: String,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("document {doc_id}: overlapping argument spans [{first_start}, {first_end}) and [{second_start}, {second_end})")]
    OverlappingSpans {
        doc_id: String,
        first_start: usize,
        first_end: usize,
        second_start: usize,
        second_end: usize,
    },

    #[error("document {0}: empty token list")]
    EmptyDocument(String),

    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),

    #[error("split spec: event type {0} is not present in the corpus")]
    UnknownEventType(String),

    #[error("split spec: event type {event_type} listed in both {first} and {second}")]
    OverlappingSplit {
        event_type: String,
        first: &'static str,
        second: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sampling infeasible: {0}")]
    Infeasible(String),

    #[error("embedding for document {0} not found")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("document {doc_id}: embedding has {rows} rows but the document has {tokens} tokens")]
    RowCountMismatch {
        doc_id: String,
        rows: usize,
        tokens: usize,
    },

    #[error("no support tokens for class {0}")]
    EmptyClass(String),

    #[error("k-means needs at least {k} points, got {points}")]
    TooFewPoints { k: usize, points: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("bad binary format: {0}")]
    Format(String),

    #[error("empty evaluation set")]
    EmptyEvaluation,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Config(_)
            | Error::UnknownEventType(_)
            | Error::OverlappingSplit { .. }
            | Error::DimensionMismatch { .. } => ErrorKind::Config,
            Error::Infeasible(_) | Error::EmptyClass(_) | Error::TooFewPoints { .. } => {
                ErrorKind::Infeasible
            }
            Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by validation, compression, I/O, and retrieval.
#[derive(Debug, Error)]
pub enum Error {
    /// A required collection was empty (document, corpus, score vector, ...).
    #[error("empty {0}")]
    Empty(&'static str),

    /// Two lengths or dimensions that must agree did not.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A NaN or infinity was found where only finite values are allowed.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// An index fell outside its valid range.
    #[error("{context}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        bound: usize,
    },

    /// Stream does not start with the bundle magic bytes.
    #[error("bad magic bytes (not a bundle file)")]
    BadMagic,

    /// Bundle version not understood by this reader.
    #[error("unsupported bundle version {0}")]
    UnsupportedVersion(u32),

    /// Stream ended in the middle of a record.
    #[error("truncated stream")]
    Truncated,

    /// A text file failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The same (query, doc) pair was judged twice in a qrels file.
    #[error("duplicate judgment for ({query_id}, {doc_id}) at line {line}")]
    DuplicateJudgment {
        line: usize,
        query_id: String,
        doc_id: String,
    },

    /// Method needs per-patch importance scores but the document has none.
    #[error("importance scores required but absent")]
    MissingImportance,

    /// Method needs the global-token embedding but the document has none.
    #[error("eos embedding required but absent")]
    MissingEos,

    /// Method needs a 2D grid shape but the document has none.
    #[error("grid shape required but absent")]
    MissingGrid,

    /// 2D pooling requires a perfect-square merging factor.
    #[error("merging factor {0} is not a perfect square")]
    NotPerfectSquare(usize),

    /// Grid shape does not multiply out to the patch count.
    #[error("grid {rows}x{cols} does not cover {n} vectors")]
    GridMismatch { rows: usize, cols: usize, n: usize },

    /// A row with (near-)zero norm cannot be cosine-normalized.
    #[error("zero-norm vector at row {0}")]
    ZeroVector(usize),

    /// Requested cluster count outside 1..=n.
    #[error("invalid cluster count {requested} for {n} points")]
    InvalidClusterCount { requested: usize, n: usize },

    /// Config fields are inconsistent with the selected method.
    #[error("config incompatible with method {method}: {message}")]
    MethodConfigMismatch { method: String, message: String },

    /// Search over an index with no documents.
    #[error("empty index")]
    EmptyIndex,

    /// Evaluation with no queries.
    #[error("empty query set")]
    EmptyQueries,

    /// Wraps a per-document failure with the offending id.
    #[error("doc {doc_id}: {source}")]
    Doc {
        doc_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach a document id to an error bubbling out of a per-doc operation.
    pub fn for_doc(self, doc_id: &str) -> Error {
        Error::Doc {
            doc_id: doc_id.to_owned(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

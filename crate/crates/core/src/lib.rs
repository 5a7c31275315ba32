//! Multi-vector embedding compression and late-interaction retrieval.
//!
//! Document pages arrive as sets of patch-level embeddings. This crate
//! reduces their vector count offline (pruning, merging, or the two-stage
//! prune-then-merge composition), scores queries against the compressed
//! index with MaxSim, and evaluates retrieval quality and storage savings.
//!
//! Modules mirror the processing stages:
//!
//! * [`model`] - domain types, validation, size accounting
//! * [`ingest`] - bundle file format, qrels, attention-derived importance
//! * [`prune`] - adaptive thresholding and the pruning baselines
//! * [`merge`] - Ward clustering, centroids, pooling baselines
//! * [`pipeline`] - method dispatch and corpus-level compression
//! * [`retrieve`] - MaxSim scoring and exact top-k search
//! * [`eval`] - nDCG@k, synthetic corpora, sweeps, distortion experiments

pub mod error;
pub mod eval;
pub mod ingest;
pub mod merge;
pub mod model;
mod numeric;
pub mod pipeline;
pub mod prune;
pub mod retrieve;

pub use error::{Error, Result};
pub use model::{
    CompressedEmbeddingSet, CompressionConfig, CompressionMethod, CorpusStats, Matrix,
    PatchEmbeddingSet, QueryEmbeddingSet,
};

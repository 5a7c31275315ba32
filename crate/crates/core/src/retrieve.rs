//! MaxSim late-interaction scoring and exact top-k search.
//!
//! The score of a document is the sum over query tokens of the maximum raw
//! dot product against the document's vectors. No normalization happens
//! inside the scorer; centroids produced by merging are scored as-is.
//! Search is exact brute force over the whole index, no shortlist.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CompressedEmbeddingSet, Matrix, QueryEmbeddingSet};
use crate::numeric;

/// Ranked hits for one query: scores non-increasing, ties broken by
/// ascending doc id, at most `top_k` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub query_id: String,
    pub hits: Vec<(String, f64)>,
}

/// `sum_i max_j q_i . d_j` with 64-bit products and accumulation.
pub fn maxsim(query: &QueryEmbeddingSet, doc_vectors: &Matrix) -> Result<f64> {
    if query.embeddings.cols() != doc_vectors.cols() {
        return Err(Error::DimensionMismatch {
            context: "maxsim",
            expected: query.embeddings.cols(),
            actual: doc_vectors.cols(),
        });
    }
    if doc_vectors.rows() == 0 {
        return Err(Error::Empty("document vectors"));
    }
    let mut score = 0.0f64;
    for q in query.embeddings.iter_rows() {
        let mut best = f64::NEG_INFINITY;
        for d in doc_vectors.iter_rows() {
            let dot = numeric::dot(q, d);
            if dot > best {
                best = dot;
            }
        }
        score += best;
    }
    Ok(score)
}

/// Score every document and keep the `top_k` best.
pub fn search(
    index: &[CompressedEmbeddingSet],
    query: &QueryEmbeddingSet,
    top_k: usize,
) -> Result<SearchResult> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let mut scored = Vec::with_capacity(index.len());
    for doc in index {
        let score = maxsim(query, &doc.embeddings)?;
        scored.push((doc.doc_id.clone(), score));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top_k);
    Ok(SearchResult {
        query_id: query.query_id.clone(),
        hits: scored,
    })
}

/// Per-query [`search`] across a thread pool; output order follows query
/// order and is identical for every `parallelism` value.
pub fn batch_search(
    index: &[CompressedEmbeddingSet],
    queries: &[QueryEmbeddingSet],
    top_k: usize,
    parallelism: usize,
) -> Result<Vec<SearchResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let results: Vec<Result<SearchResult>> =
        pool.install(|| queries.par_iter().map(|q| search(index, q, top_k)).collect());
    results.into_iter().collect()
}

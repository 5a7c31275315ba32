//! Method dispatch and corpus-level compression.
//!
//! `compress` wires the stage modules together: the two-stage compressor
//! prunes adaptively then merges the survivors, prune-only baselines stop
//! after stage 1, merge-only baselines cluster or pool the full set.
//! `compress_corpus` fans documents out across a thread pool; documents are
//! independent, so output is bit-identical for any worker count and is
//! always reported in input order.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::merge;
use crate::model::{
    corpus_stats, validate, CompressedEmbeddingSet, CompressionConfig, CompressionMethod,
    CorpusStats, PatchEmbeddingSet,
};
use crate::prune;

/// Per-document size chain and timing.
#[derive(Debug, Clone, Serialize)]
pub struct DocReport {
    pub doc_id: String,
    pub n_original: usize,
    pub n_pruned: usize,
    pub n_compressed: usize,
    /// Wall-clock seconds spent inside `compress` (I/O excluded).
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompressionJobReport {
    pub per_doc: Vec<DocReport>,
    pub stats: CorpusStats,
}

/// Compress one document with the configured method.
pub fn compress(
    doc: &PatchEmbeddingSet,
    config: &CompressionConfig,
) -> Result<CompressedEmbeddingSet> {
    validate(doc)?;
    config.validate()?;
    let n = doc.n_patches();

    let prune_only = |outcome: prune::PruneOutcome| CompressedEmbeddingSet {
        doc_id: doc.doc_id.clone(),
        embeddings: doc.embeddings.select_rows(&outcome.kept_indices),
        kept_indices: outcome.kept_indices,
        cluster_labels: None,
        original_count: n,
    };
    let merge_only = |(merged, partition): (crate::model::Matrix, merge::Partition)| {
        CompressedEmbeddingSet {
            doc_id: doc.doc_id.clone(),
            embeddings: merged,
            kept_indices: Vec::new(),
            cluster_labels: Some(partition.labels().to_vec()),
            original_count: n,
        }
    };

    match config.method {
        CompressionMethod::PruneThenMerge => {
            let outcome = prune::prune_adaptive(doc, config.k)?;
            let selected = doc.embeddings.select_rows(&outcome.kept_indices);
            let (merged, partition) = merge::merge_sem_cluster(&selected, config.m)?;
            Ok(CompressedEmbeddingSet {
                doc_id: doc.doc_id.clone(),
                embeddings: merged,
                kept_indices: outcome.kept_indices,
                cluster_labels: Some(partition.labels().to_vec()),
                original_count: n,
            })
        }
        CompressionMethod::DocPruner => Ok(prune_only(prune::prune_adaptive(doc, config.k)?)),
        CompressionMethod::Random => Ok(prune_only(prune::prune_random(
            doc,
            config.ratio,
            config.seed,
        ))),
        CompressionMethod::AttentionRatio => Ok(prune_only(
            prune::prune_fixed_ratio_by_attention(doc, config.ratio)?,
        )),
        CompressionMethod::AttentionThreshold => Ok(prune_only(prune::prune_static_threshold(
            doc,
            config.tau_global,
        )?)),
        CompressionMethod::AttentionPlusSimilarity => Ok(prune_only(
            prune::prune_attention_plus_similarity(doc, config.k, config.alpha)?,
        )),
        CompressionMethod::PivotThreshold => Ok(prune_only(prune::prune_pivot_threshold(
            doc,
            config.k,
            config.k_dup,
            config.num_pivots,
        )?)),
        CompressionMethod::SemCluster => {
            Ok(merge_only(merge::merge_sem_cluster(&doc.embeddings, config.m)?))
        }
        CompressionMethod::Pool1d => {
            Ok(merge_only(merge::merge_pool_1d(&doc.embeddings, config.m)?))
        }
        CompressionMethod::Pool2d => {
            let grid = doc.grid_shape.ok_or(Error::MissingGrid)?;
            Ok(merge_only(merge::merge_pool_2d(
                &doc.embeddings,
                config.m,
                grid,
            )?))
        }
        CompressionMethod::None => Ok(CompressedEmbeddingSet {
            doc_id: doc.doc_id.clone(),
            embeddings: doc.embeddings.clone(),
            kept_indices: (0..n).collect(),
            cluster_labels: None,
            original_count: n,
        }),
    }
}

/// Compress a corpus across `parallelism` workers. The first failing
/// document (in input order) aborts the job with its id attached.
pub fn compress_corpus(
    docs: &[PatchEmbeddingSet],
    config: &CompressionConfig,
    parallelism: usize,
) -> Result<(Vec<CompressedEmbeddingSet>, CompressionJobReport)> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let results: Vec<Result<(CompressedEmbeddingSet, f64)>> = pool.install(|| {
        docs.par_iter()
            .map(|doc| {
                let start = Instant::now();
                let out = compress(doc, config)?;
                Ok((out, start.elapsed().as_secs_f64()))
            })
            .collect()
    });

    let mut compressed = Vec::with_capacity(docs.len());
    let mut per_doc = Vec::with_capacity(docs.len());
    for (doc, result) in docs.iter().zip(results) {
        let (out, seconds) = result.map_err(|e| e.for_doc(&doc.doc_id))?;
        per_doc.push(DocReport {
            doc_id: out.doc_id.clone(),
            n_original: out.original_count,
            n_pruned: out.n_pruned(),
            n_compressed: out.n_compressed(),
            seconds,
        });
        compressed.push(out);
    }
    let stats = corpus_stats(&compressed, docs[0].dim())?;
    Ok((compressed, CompressionJobReport { per_doc, stats }))
}

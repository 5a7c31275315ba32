//! Evaluation: nDCG@k, synthetic signal/noise corpora, config sweeps, and
//! the prune-then-merge vs naive-merge distortion experiment.
//!
//! nDCG uses the exponential gain `2^grade - 1` with a `log2(rank + 1)`
//! discount; binary judgments reduce it to `1 / log2(rank + 1)`. A query
//! with no relevant documents (IDCG = 0) scores 0.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::Qrels;
use crate::merge;
use crate::model::{
    corpus_stats, CompressedEmbeddingSet, CompressionConfig, CompressionMethod, CorpusStats,
    Matrix, PatchEmbeddingSet, QueryEmbeddingSet,
};
use crate::pipeline::compress_corpus;
use crate::prune;
use crate::retrieve::batch_search;

// ---------------------------------------------------------------------------
// nDCG

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// nDCG@k of a ranking against one query's judgments. Unjudged documents
/// have grade 0.
pub fn ndcg_at_k<S: AsRef<str>>(
    ranking: &[S],
    judgments: &std::collections::BTreeMap<String, u32>,
    k: usize,
) -> f64 {
    let mut dcg = 0.0;
    for (i, doc) in ranking.iter().take(k).enumerate() {
        let grade = judgments.get(doc.as_ref()).copied().unwrap_or(0);
        dcg += gain(grade) / discount(i + 1);
    }
    let mut grades: Vec<u32> = judgments.values().copied().collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let mut idcg = 0.0;
    for (i, grade) in grades.iter().take(k).enumerate() {
        idcg += gain(*grade) / discount(i + 1);
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerQueryNdcg {
    pub query_id: String,
    pub ndcg: f64,
}

/// Quality, storage, and timing summary of one compressed index.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub k: usize,
    pub per_query: Vec<PerQueryNdcg>,
    /// Unweighted arithmetic mean over evaluated queries.
    pub mean_ndcg: f64,
    pub stats: CorpusStats,
    /// Wall-clock seconds spent scoring all queries.
    pub search_seconds: f64,
}

/// Search every query against the index and report per-query and mean
/// nDCG@k. Queries missing from the qrels score 0.
pub fn evaluate_run(
    index: &[CompressedEmbeddingSet],
    queries: &[QueryEmbeddingSet],
    qrels: &Qrels,
    k: usize,
    parallelism: usize,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::EmptyQueries);
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let start = Instant::now();
    let results = batch_search(index, queries, k, parallelism)?;
    let search_seconds = start.elapsed().as_secs_f64();

    let empty = std::collections::BTreeMap::new();
    let mut per_query = Vec::with_capacity(queries.len());
    let mut total = 0.0;
    for res in &results {
        let judgments = qrels.get(&res.query_id).unwrap_or(&empty);
        let ranking: Vec<&str> = res.hits.iter().map(|(d, _)| d.as_str()).collect();
        let ndcg = ndcg_at_k(&ranking, judgments, k);
        total += ndcg;
        per_query.push(PerQueryNdcg {
            query_id: res.query_id.clone(),
            ndcg,
        });
    }
    let stats = corpus_stats(index, index[0].embeddings.cols())?;
    Ok(EvalReport {
        k,
        per_query,
        mean_ndcg: total / queries.len() as f64,
        stats,
        search_seconds,
    })
}

// ---------------------------------------------------------------------------
// synthetic corpus

/// Generator settings for the signal/noise synthetic corpus.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub num_docs: usize,
    /// True semantic clusters per document.
    pub concepts_per_doc: usize,
    pub signal_per_concept: usize,
    pub noise_per_doc: usize,
    pub dim: usize,
    /// Within-concept spread of signal patches.
    pub signal_sigma: f64,
    /// Scale of the isotropic noise patches.
    pub noise_scale: f64,
    /// Minimum separation between the lowest signal importance and the
    /// highest noise importance. Both bands have width 1.
    pub importance_gap: f64,
    pub queries_per_doc: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            num_docs: 64,
            concepts_per_doc: 4,
            signal_per_concept: 8,
            noise_per_doc: 32,
            dim: 5,
            signal_sigma: 0.05,
            noise_scale: 0.3,
            importance_gap: 10.0,
            queries_per_doc: 2,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.num_docs >= 1
            && self.concepts_per_doc >= 1
            && self.signal_per_concept >= 1
            && self.dim >= 1
            && self.queries_per_doc >= 1;
        if !positive {
            return Err(Error::Empty("synth counts"));
        }
        if self.signal_sigma <= 0.0 || self.noise_scale <= 0.0 || self.importance_gap <= 0.0 {
            return Err(Error::MethodConfigMismatch {
                method: "synth".to_owned(),
                message: "signal_sigma, noise_scale, importance_gap must be positive".to_owned(),
            });
        }
        Ok(())
    }

    /// Signal patches per document; they occupy the first rows of each
    /// generated document.
    pub fn signal_count(&self) -> usize {
        self.concepts_per_doc * self.signal_per_concept
    }

    pub fn patches_per_doc(&self) -> usize {
        self.signal_count() + self.noise_per_doc
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u avoids ln(0)
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| standard_normal(rng)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn near_square_grid(n: usize) -> (usize, usize) {
    let mut best = 1;
    let mut r = 1;
    while r * r <= n {
        if n.is_multiple_of(r) {
            best = r;
        }
        r += 1;
    }
    (best, n / best)
}

/// Generate documents, queries, and qrels. Each document draws
/// `concepts_per_doc` unit concept centers; signal patches scatter around a
/// center with the high importance band `[gap+1, gap+2)`, noise patches are
/// isotropic with the low band `[0, 1)`. Each query's tokens are noisy
/// copies of one document's centers and that document is its sole grade-1
/// judgment. Fully deterministic given the seed: signal rows come first
/// within each document.
pub fn synth_corpus(
    params: &SynthParams,
) -> Result<(Vec<PatchEmbeddingSet>, Vec<QueryEmbeddingSet>, Qrels)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let d = params.dim;
    let n = params.patches_per_doc();
    let (grid_rows, grid_cols) = near_square_grid(n);

    let mut docs = Vec::with_capacity(params.num_docs);
    let mut queries = Vec::with_capacity(params.num_docs * params.queries_per_doc);
    let mut qrels = Qrels::new();

    for doc_idx in 0..params.num_docs {
        let doc_id = format!("doc{doc_idx:05}");
        let centers: Vec<Vec<f64>> = (0..params.concepts_per_doc)
            .map(|_| unit_vec(&mut rng, d))
            .collect();

        let mut data = Vec::with_capacity(n * d);
        let mut importance = Vec::with_capacity(n);
        for center in &centers {
            for _ in 0..params.signal_per_concept {
                let offset = gaussian_vec(&mut rng, d);
                for t in 0..d {
                    data.push((center[t] + params.signal_sigma * offset[t]) as f32);
                }
                importance.push((params.importance_gap + 1.0 + rng.gen::<f64>()) as f32);
            }
        }
        for _ in 0..params.noise_per_doc {
            for v in gaussian_vec(&mut rng, d) {
                data.push((params.noise_scale * v) as f32);
            }
            importance.push(rng.gen::<f64>() as f32);
        }

        let mut eos = vec![0.0f64; d];
        for center in &centers {
            for t in 0..d {
                eos[t] += center[t];
            }
        }
        let eos_norm = eos.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let eos: Vec<f32> = eos.iter().map(|x| (x / eos_norm) as f32).collect();

        docs.push(
            PatchEmbeddingSet::new(doc_id.clone(), Matrix::new(n, d, data)?)
                .with_importance(importance)
                .with_eos(eos)
                .with_grid(grid_rows, grid_cols),
        );

        for q_idx in 0..params.queries_per_doc {
            let query_id = format!("q{doc_idx:05}_{q_idx}");
            let mut qdata = Vec::with_capacity(centers.len() * d);
            for center in &centers {
                let offset = gaussian_vec(&mut rng, d);
                for t in 0..d {
                    qdata.push((center[t] + params.signal_sigma * offset[t]) as f32);
                }
            }
            queries.push(QueryEmbeddingSet::new(
                query_id.clone(),
                Matrix::new(centers.len(), d, qdata)?,
            ));
            qrels.entry(query_id).or_default().insert(doc_id.clone(), 1);
        }
    }
    Ok((docs, queries, qrels))
}

// ---------------------------------------------------------------------------
// distortion

/// Mean over signal rows of the squared distance to the nearest codebook
/// row.
pub fn signal_distortion(signal: &Matrix, codebook: &Matrix) -> Result<f64> {
    if signal.rows() == 0 || codebook.rows() == 0 {
        return Err(Error::Empty("distortion operands"));
    }
    if signal.cols() != codebook.cols() {
        return Err(Error::DimensionMismatch {
            context: "distortion",
            expected: signal.cols(),
            actual: codebook.cols(),
        });
    }
    let mut total = 0.0f64;
    for s in signal.iter_rows() {
        let mut best = f64::INFINITY;
        for c in codebook.iter_rows() {
            let mut dist = 0.0f64;
            for (a, b) in s.iter().zip(c) {
                let diff = f64::from(*a) - f64::from(*b);
                dist += diff * diff;
            }
            if dist < best {
                best = dist;
            }
        }
        total += best;
    }
    Ok(total / signal.rows() as f64)
}

/// Distortion of the two-stage codebook vs a naive merge of the full noisy
/// set at matched codebook size, both measured against the true signal.
#[derive(Debug, Clone, Serialize)]
pub struct SynergyReport {
    pub distortion_ours: f64,
    pub distortion_naive: f64,
    /// Total codebook vectors over the corpus (equal for both pipelines by
    /// construction).
    pub codebook_size: u64,
}

/// Per document: prune adaptively then merge the survivors; separately, cut
/// a Ward hierarchy of the full patch set at the same codebook size. Report
/// corpus-mean distortions against the known signal rows.
pub fn synergy_experiment(params: &SynthParams, k: f64, m: usize) -> Result<SynergyReport> {
    let (docs, _, _) = synth_corpus(params)?;
    let n_sig = params.signal_count();
    let signal_rows: Vec<usize> = (0..n_sig).collect();

    let mut sum_ours = 0.0;
    let mut sum_naive = 0.0;
    let mut codebook_size = 0u64;
    for doc in &docs {
        let signal = doc.embeddings.select_rows(&signal_rows);

        let kept = prune::prune_adaptive(doc, k)?.kept_indices;
        let selected = doc.embeddings.select_rows(&kept);
        let (ours, _) = merge::merge_sem_cluster(&selected, m)?;

        let delta = merge::cosine_distance_matrix(&doc.embeddings)?;
        let partition = merge::ward_linkage_partition(&delta, ours.rows())?;
        let naive = merge::centroids(&doc.embeddings, &partition)?;

        sum_ours += signal_distortion(&signal, &ours)?;
        sum_naive += signal_distortion(&signal, &naive)?;
        codebook_size += ours.rows() as u64;
    }
    let n = docs.len() as f64;
    Ok(SynergyReport {
        distortion_ours: sum_ours / n,
        distortion_naive: sum_naive / n,
        codebook_size,
    })
}

// ---------------------------------------------------------------------------
// sweep

/// One sweep row; `error` is set (and the metrics absent) when the config
/// failed.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub config: CompressionConfig,
    pub pruning_rate: Option<f64>,
    pub ndcg_mean: Option<f64>,
    pub error: Option<String>,
}

/// Compress and evaluate once per config; a failing config reports its
/// error in its row without aborting the rest.
pub fn sweep(
    docs: &[PatchEmbeddingSet],
    queries: &[QueryEmbeddingSet],
    qrels: &Qrels,
    configs: &[CompressionConfig],
    k: usize,
    parallelism: usize,
) -> Vec<SweepRow> {
    configs
        .iter()
        .map(|config| {
            let outcome = compress_corpus(docs, config, parallelism).and_then(|(index, _)| {
                evaluate_run(&index, queries, qrels, k, parallelism)
            });
            match outcome {
                Ok(report) => SweepRow {
                    config: config.clone(),
                    pruning_rate: Some(report.stats.pruning_rate),
                    ndcg_mean: Some(report.mean_ndcg),
                    error: None,
                },
                Err(e) => SweepRow {
                    config: config.clone(),
                    pruning_rate: None,
                    ndcg_mean: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// The hyperparameters a method actually consults, rendered `name=value`.
pub fn relevant_params(config: &CompressionConfig) -> String {
    match config.method {
        CompressionMethod::PruneThenMerge => format!("k={},m={}", config.k, config.m),
        CompressionMethod::DocPruner => format!("k={}", config.k),
        CompressionMethod::Random => format!("ratio={},seed={}", config.ratio, config.seed),
        CompressionMethod::AttentionRatio => format!("ratio={}", config.ratio),
        CompressionMethod::AttentionThreshold => format!("tau={}", config.tau_global),
        CompressionMethod::AttentionPlusSimilarity => {
            format!("k={},alpha={}", config.k, config.alpha)
        }
        CompressionMethod::PivotThreshold => format!(
            "k={},k_dup={},num_pivots={}",
            config.k, config.k_dup, config.num_pivots
        ),
        CompressionMethod::SemCluster | CompressionMethod::Pool1d | CompressionMethod::Pool2d => {
            format!("m={}", config.m)
        }
        CompressionMethod::None => String::new(),
    }
}

/// Render sweep rows as the documented TSV table. Failed rows print `-`
/// for both metrics.
pub fn sweep_table_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method\tparams\tpruning_rate\tndcg_mean\n");
    for row in rows {
        let rate = row
            .pruning_rate
            .map_or_else(|| "-".to_owned(), |v| format!("{v:.6}"));
        let ndcg = row
            .ndcg_mean
            .map_or_else(|| "-".to_owned(), |v| format!("{v:.6}"));
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            row.config.method,
            relevant_params(&row.config),
            rate,
            ndcg
        ));
    }
    out
}

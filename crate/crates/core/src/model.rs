//! Shared domain types, validation, and size accounting.
//!
//! Embedding scalars are `f32` end to end; every accumulation (means, dot
//! products, variances) runs in `f64` to keep statistics stable. All types
//! are immutable after construction and safe to share across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f32` matrix. Rows are vectors, columns are dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    /// Build from a flat row-major buffer. `data.len()` must equal `rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix buffer",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from row slices; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact on an empty matrix needs a nonzero chunk size
        self.data.chunks(self.cols.max(1))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

/// One document page: `N_p` patch vectors of dimension `D` plus optional
/// per-patch importance, global-token embedding, and grid layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbeddingSet {
    pub doc_id: String,
    pub embeddings: Matrix,
    /// Per-patch importance scores, length `N_p` when present.
    pub importance: Option<Vec<f32>>,
    /// Hidden state of the global token, length `D` when present.
    pub eos_embedding: Option<Vec<f32>>,
    /// `(rows, cols)` with `rows * cols == N_p` when present.
    pub grid_shape: Option<(usize, usize)>,
}

impl PatchEmbeddingSet {
    pub fn new(doc_id: impl Into<String>, embeddings: Matrix) -> Self {
        Self {
            doc_id: doc_id.into(),
            embeddings,
            importance: None,
            eos_embedding: None,
            grid_shape: None,
        }
    }

    pub fn with_importance(mut self, importance: Vec<f32>) -> Self {
        self.importance = Some(importance);
        self
    }

    pub fn with_eos(mut self, eos: Vec<f32>) -> Self {
        self.eos_embedding = Some(eos);
        self
    }

    pub fn with_grid(mut self, rows: usize, cols: usize) -> Self {
        self.grid_shape = Some((rows, cols));
        self
    }

    pub fn n_patches(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }
}

/// `N_q` token vectors of dimension `D` for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbeddingSet {
    pub query_id: String,
    pub embeddings: Matrix,
}

impl QueryEmbeddingSet {
    pub fn new(query_id: impl Into<String>, embeddings: Matrix) -> Self {
        Self {
            query_id: query_id.into(),
            embeddings,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embeddings.rows() == 0 {
            return Err(Error::Empty("query embedding set"));
        }
        if self.embeddings.cols() == 0 {
            return Err(Error::Empty("query embedding dimension"));
        }
        if !self.embeddings.is_finite() {
            return Err(Error::NonFinite("query embeddings"));
        }
        Ok(())
    }
}

/// Compression method selector. Only the fields of [`CompressionConfig`]
/// relevant to the selected method are consulted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompressionMethod {
    /// Adaptive prune then hierarchical merge (the two-stage compressor).
    #[serde(rename = "prune_then_merge")]
    PruneThenMerge,
    /// Adaptive attention-threshold pruning only.
    #[serde(rename = "docpruner")]
    DocPruner,
    /// Uniform random pruning at a fixed ratio.
    #[serde(rename = "random")]
    Random,
    /// Drop a fixed proportion of lowest-attention patches.
    #[serde(rename = "attention_ratio")]
    AttentionRatio,
    /// Static global attention threshold.
    #[serde(rename = "attention_threshold")]
    AttentionThreshold,
    /// Weighted attention + eos-similarity composite score, adaptive threshold.
    #[serde(rename = "attention_plus_similarity")]
    AttentionPlusSimilarity,
    /// Importance filtering then pivot-similarity de-duplication.
    #[serde(rename = "pivot_threshold")]
    PivotThreshold,
    /// Hierarchical clustering of the full set, centroids as output.
    #[serde(rename = "sem_cluster")]
    SemCluster,
    /// Mean over non-overlapping sequential windows.
    #[serde(rename = "pool_1d")]
    Pool1d,
    /// Mean over 2D grid tiles.
    #[serde(rename = "pool_2d")]
    Pool2d,
    /// Identity copy (no compression).
    #[serde(rename = "none")]
    None,
}

impl CompressionMethod {
    pub const ALL: [CompressionMethod; 11] = [
        CompressionMethod::PruneThenMerge,
        CompressionMethod::DocPruner,
        CompressionMethod::Random,
        CompressionMethod::AttentionRatio,
        CompressionMethod::AttentionThreshold,
        CompressionMethod::AttentionPlusSimilarity,
        CompressionMethod::PivotThreshold,
        CompressionMethod::SemCluster,
        CompressionMethod::Pool1d,
        CompressionMethod::Pool2d,
        CompressionMethod::None,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CompressionMethod::PruneThenMerge => "prune_then_merge",
            CompressionMethod::DocPruner => "docpruner",
            CompressionMethod::Random => "random",
            CompressionMethod::AttentionRatio => "attention_ratio",
            CompressionMethod::AttentionThreshold => "attention_threshold",
            CompressionMethod::AttentionPlusSimilarity => "attention_plus_similarity",
            CompressionMethod::PivotThreshold => "pivot_threshold",
            CompressionMethod::SemCluster => "sem_cluster",
            CompressionMethod::Pool1d => "pool_1d",
            CompressionMethod::Pool2d => "pool_2d",
            CompressionMethod::None => "none",
        }
    }
}

impl std::str::FromStr for CompressionMethod {
    type Err = Error;

    /// Accepts both snake_case and kebab-case spellings.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        CompressionMethod::ALL
            .iter()
            .copied()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::MethodConfigMismatch {
                method: s.to_owned(),
                message: "unknown method".to_owned(),
            })
    }
}

impl std::fmt::Display for CompressionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_k() -> f64 {
    -0.75
}
fn default_m() -> usize {
    4
}
fn default_ratio() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    0.5
}
fn default_num_pivots() -> usize {
    10
}

/// Method selector plus hyperparameters. Irrelevant fields are ignored by
/// the dispatcher, so one struct covers every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub method: CompressionMethod,
    /// Adaptation factor (pruning strictness), lower keeps more.
    #[serde(default = "default_k")]
    pub k: f64,
    /// Merging factor, target reduction of the merge stage.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Fixed pruning ratio in `[0, 1)`.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Static global threshold.
    #[serde(default)]
    pub tau_global: f64,
    /// Attention-vs-similarity mixing weight in `[0, 1]`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// De-duplication adaptation factor.
    #[serde(default)]
    pub k_dup: f64,
    #[serde(default = "default_num_pivots")]
    pub num_pivots: usize,
    /// Seed for the random method.
    #[serde(default)]
    pub seed: u64,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            method: CompressionMethod::PruneThenMerge,
            k: default_k(),
            m: default_m(),
            ratio: default_ratio(),
            tau_global: 0.0,
            alpha: default_alpha(),
            k_dup: 0.0,
            num_pivots: default_num_pivots(),
            seed: 0,
        }
    }
}

impl CompressionConfig {
    pub fn for_method(method: CompressionMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// Check only the fields the selected method consults.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| {
            Err(Error::MethodConfigMismatch {
                method: self.method.name().to_owned(),
                message: message.to_owned(),
            })
        };
        match self.method {
            CompressionMethod::PruneThenMerge => {
                if !self.k.is_finite() {
                    return fail("k must be finite");
                }
                if self.m < 1 {
                    return fail("m must be >= 1");
                }
            }
            CompressionMethod::DocPruner => {
                if !self.k.is_finite() {
                    return fail("k must be finite");
                }
            }
            CompressionMethod::Random | CompressionMethod::AttentionRatio => {
                if !(0.0..1.0).contains(&self.ratio) {
                    return fail("ratio must lie in [0, 1)");
                }
            }
            CompressionMethod::AttentionThreshold => {
                if self.tau_global.is_nan() {
                    return fail("tau_global must not be NaN");
                }
            }
            CompressionMethod::AttentionPlusSimilarity => {
                if !self.k.is_finite() {
                    return fail("k must be finite");
                }
                if !(0.0..=1.0).contains(&self.alpha) {
                    return fail("alpha must lie in [0, 1]");
                }
            }
            CompressionMethod::PivotThreshold => {
                if !self.k.is_finite() || !self.k_dup.is_finite() {
                    return fail("k and k_dup must be finite");
                }
                if self.num_pivots < 1 {
                    return fail("num_pivots must be >= 1");
                }
            }
            CompressionMethod::SemCluster | CompressionMethod::Pool1d => {
                if self.m < 1 {
                    return fail("m must be >= 1");
                }
            }
            CompressionMethod::Pool2d => {
                if self.m < 1 {
                    return fail("m must be >= 1");
                }
                let s = (self.m as f64).sqrt().round() as usize;
                if s * s != self.m {
                    return fail("m must be a perfect square");
                }
            }
            CompressionMethod::None => {}
        }
        Ok(())
    }
}

/// Final compressed vectors for one document plus provenance and counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedEmbeddingSet {
    pub doc_id: String,
    pub embeddings: Matrix,
    /// Original patch indices that survived pruning, strictly increasing.
    /// Empty for merge-only methods.
    pub kept_indices: Vec<usize>,
    /// For merge-bearing methods: cluster label of each pruned-set member.
    pub cluster_labels: Option<Vec<usize>>,
    /// `N_p` of the source document.
    pub original_count: usize,
}

impl CompressedEmbeddingSet {
    pub fn n_compressed(&self) -> usize {
        self.embeddings.rows()
    }

    /// `N_p'`, the size of the intermediate pruned set. Merge-only methods
    /// leave `kept_indices` empty, in which case the pruned set is the
    /// whole document.
    pub fn n_pruned(&self) -> usize {
        if self.kept_indices.is_empty() {
            self.original_count
        } else {
            self.kept_indices.len()
        }
    }
}

/// Corpus-level vector and byte accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total_original_vectors: u64,
    pub total_compressed_vectors: u64,
    /// `1 - compressed/original`, in `[0, 1)`.
    pub pruning_rate: f64,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
}

/// Check every [`PatchEmbeddingSet`] invariant; total, never panics.
pub fn validate(doc: &PatchEmbeddingSet) -> Result<()> {
    let n = doc.embeddings.rows();
    let d = doc.embeddings.cols();
    if n == 0 {
        return Err(Error::Empty("patch embedding set"));
    }
    if d == 0 {
        return Err(Error::Empty("embedding dimension"));
    }
    if !doc.embeddings.is_finite() {
        return Err(Error::NonFinite("embeddings"));
    }
    if let Some(imp) = &doc.importance {
        if imp.len() != n {
            return Err(Error::DimensionMismatch {
                context: "importance",
                expected: n,
                actual: imp.len(),
            });
        }
        if imp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("importance"));
        }
    }
    if let Some(eos) = &doc.eos_embedding {
        if eos.len() != d {
            return Err(Error::DimensionMismatch {
                context: "eos embedding",
                expected: d,
                actual: eos.len(),
            });
        }
        if eos.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("eos embedding"));
        }
    }
    if let Some((rows, cols)) = doc.grid_shape {
        if rows * cols != n {
            return Err(Error::DimensionMismatch {
                context: "grid shape",
                expected: n,
                actual: rows * cols,
            });
        }
    }
    Ok(())
}

/// Aggregate vector counts, bytes (`count * D * 4`), and the pruning rate
/// over a compressed corpus.
pub fn corpus_stats(docs: &[CompressedEmbeddingSet], dim: usize) -> Result<CorpusStats> {
    if docs.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut original: u64 = 0;
    let mut compressed: u64 = 0;
    for doc in docs {
        if doc.embeddings.cols() != dim {
            return Err(Error::DimensionMismatch {
                context: "corpus dimension",
                expected: dim,
                actual: doc.embeddings.cols(),
            });
        }
        original += doc.original_count as u64;
        compressed += doc.n_compressed() as u64;
    }
    let bytes_per_vector = dim as u64 * 4;
    Ok(CorpusStats {
        total_original_vectors: original,
        total_compressed_vectors: compressed,
        pruning_rate: 1.0 - compressed as f64 / original as f64,
        original_bytes: original * bytes_per_vector,
        compressed_bytes: compressed * bytes_per_vector,
    })
}

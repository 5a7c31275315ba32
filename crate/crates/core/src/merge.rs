//! Stage-2 hierarchical merging and the pooling baselines.
//!
//! Merging L2-normalizes the embeddings, builds a cosine distance matrix,
//! runs Ward-linkage agglomeration down to `max(1, floor(n/m))` clusters,
//! and replaces each cluster with the mean of its original (un-normalized)
//! member rows.
//!
//! Ward's method is defined on squared Euclidean distances. For unit rows
//! `||u_i - u_j||^2 = 2 * (1 - cos)`, so the Lance-Williams recurrence runs
//! on `2 * delta`; the constant factor changes no merge order.

use crate::error::{Error, Result};
use crate::model::Matrix;
use crate::numeric;

/// Cluster assignment for n points. Labels are canonical: the smallest
/// member index of cluster `c` is increasing in `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl Partition {
    /// Build from raw labels, renumbering clusters into canonical order.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut remap: Vec<Option<usize>> = vec![None; raw.len()];
        let mut next = 0;
        let mut labels = Vec::with_capacity(raw.len());
        for &l in raw {
            let c = *remap[l].get_or_insert_with(|| {
                let c = next;
                next += 1;
                c
            });
            labels.push(c);
        }
        Self {
            labels,
            n_clusters: next,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            n_clusters: n,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member counts per cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// `N'' = max(1, floor(n / m))`.
pub fn target_cluster_count(n: usize, m: usize) -> usize {
    (n / m).max(1)
}

/// Symmetric pairwise distance matrix.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Pairwise cosine distances `1 - u_i . u_j` over L2-normalized rows,
/// clamped to `[0, 2]` with a zero diagonal.
pub fn cosine_distance_matrix(vectors: &Matrix) -> Result<DistanceMatrix> {
    let n = vectors.rows();
    let d = vectors.cols();
    if n == 0 {
        return Err(Error::Empty("vectors"));
    }
    let mut unit = vec![0.0f64; n * d];
    for (i, row) in vectors.iter_rows().enumerate() {
        let nrm = numeric::norm(row);
        if nrm < numeric::ZERO_NORM_EPS {
            return Err(Error::ZeroVector(i));
        }
        for (t, v) in row.iter().enumerate() {
            unit[i * d + t] = f64::from(*v) / nrm;
        }
    }
    let mut values = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut dot = 0.0f64;
            for t in 0..d {
                dot += unit[i * d + t] * unit[j * d + t];
            }
            let dist = (1.0 - dot).clamp(0.0, 2.0);
            values[i * n + j] = dist;
            values[j * n + i] = dist;
        }
    }
    Ok(DistanceMatrix { n, values })
}

/// Agglomerate under the Ward objective until exactly `n_clusters` remain.
///
/// Naive O(n^3) scan with deterministic tie-breaking: among minimal-cost
/// pairs the lexicographically smallest `(i, j)` merges first, where slots
/// are identified by their smallest original member index.
pub fn ward_linkage_partition(delta: &DistanceMatrix, n_clusters: usize) -> Result<Partition> {
    let n = delta.n;
    if n_clusters < 1 || n_clusters > n {
        return Err(Error::InvalidClusterCount {
            requested: n_clusters,
            n,
        });
    }

    // squared Euclidean equivalents of the cosine distances
    let mut dist: Vec<f64> = delta.values.iter().map(|v| 2.0 * v).collect();
    let mut active = vec![true; n];
    let mut size = vec![1.0f64; n];
    let mut assign: Vec<usize> = (0..n).collect();

    for _ in 0..(n - n_clusters) {
        let mut best_i = usize::MAX;
        let mut best_j = usize::MAX;
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i * n + j];
                if d < best_d {
                    best_d = d;
                    best_i = i;
                    best_j = j;
                }
            }
        }

        let (i, j, dij) = (best_i, best_j, best_d);
        let (si, sj) = (size[i], size[j]);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let sk = size[k];
            let updated =
                ((si + sk) * dist[i * n + k] + (sj + sk) * dist[j * n + k] - sk * dij)
                    / (si + sj + sk);
            dist[i * n + k] = updated;
            dist[k * n + i] = updated;
        }
        size[i] = si + sj;
        active[j] = false;
        for a in assign.iter_mut() {
            if *a == j {
                *a = i;
            }
        }
    }

    // slots are their smallest member index, so ascending slot order is
    // already canonical
    let mut slot_to_label = vec![usize::MAX; n];
    let mut next = 0;
    for (slot, is_active) in active.iter().enumerate() {
        if *is_active {
            slot_to_label[slot] = next;
            next += 1;
        }
    }
    Ok(Partition {
        labels: assign.iter().map(|&s| slot_to_label[s]).collect(),
        n_clusters: next,
    })
}

/// Mean of the original (pre-normalization) member rows of each cluster.
pub fn centroids(vectors: &Matrix, partition: &Partition) -> Result<Matrix> {
    let n = vectors.rows();
    let d = vectors.cols();
    if partition.len() != n {
        return Err(Error::DimensionMismatch {
            context: "partition labels",
            expected: n,
            actual: partition.len(),
        });
    }
    let k = partition.n_clusters();
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0usize; k];
    for (i, row) in vectors.iter_rows().enumerate() {
        let c = partition.labels()[i];
        counts[c] += 1;
        for (t, v) in row.iter().enumerate() {
            sums[c * d + t] += f64::from(*v);
        }
    }
    let mut data = Vec::with_capacity(k * d);
    for c in 0..k {
        for t in 0..d {
            data.push((sums[c * d + t] / counts[c] as f64) as f32);
        }
    }
    Matrix::new(k, d, data)
}

/// Full merge stage: normalize, cluster with Ward at `max(1, floor(n/m))`
/// clusters, emit centroids. Passes the input through unchanged when
/// `n < m` or `m <= 1`.
pub fn merge_sem_cluster(vectors: &Matrix, m: usize) -> Result<(Matrix, Partition)> {
    let n = vectors.rows();
    if n == 0 {
        return Err(Error::Empty("vectors"));
    }
    if n < m || m <= 1 {
        return Ok((vectors.clone(), Partition::identity(n)));
    }
    let target = target_cluster_count(n, m);
    let delta = cosine_distance_matrix(vectors)?;
    let partition = ward_linkage_partition(&delta, target)?;
    let merged = centroids(vectors, &partition)?;
    Ok((merged, partition))
}

/// Mean over non-overlapping sequential windows of size `m`; the final
/// window may be partial and averages over its actual member count.
pub fn merge_pool_1d(vectors: &Matrix, m: usize) -> Result<(Matrix, Partition)> {
    let n = vectors.rows();
    if n == 0 {
        return Err(Error::Empty("vectors"));
    }
    if m == 0 {
        return Err(Error::InvalidClusterCount { requested: 0, n });
    }
    let labels: Vec<usize> = (0..n).map(|j| j / m).collect();
    let partition = Partition::from_labels(&labels);
    let merged = centroids(vectors, &partition)?;
    Ok((merged, partition))
}

/// Mean over `sqrt(m) x sqrt(m)` tiles of the row-major grid; edge tiles
/// may be partial. Tiles are emitted in row-major tile order.
pub fn merge_pool_2d(
    vectors: &Matrix,
    m: usize,
    grid: (usize, usize),
) -> Result<(Matrix, Partition)> {
    let n = vectors.rows();
    if n == 0 {
        return Err(Error::Empty("vectors"));
    }
    let s = (m as f64).sqrt().round() as usize;
    if m == 0 || s * s != m {
        return Err(Error::NotPerfectSquare(m));
    }
    let (rows, cols) = grid;
    if rows * cols != n {
        return Err(Error::GridMismatch { rows, cols, n });
    }
    let tiles_per_row = cols.div_ceil(s);
    let labels: Vec<usize> = (0..n)
        .map(|j| {
            let (r, c) = (j / cols, j % cols);
            (r / s) * tiles_per_row + c / s
        })
        .collect();
    let partition = Partition::from_labels(&labels);
    let merged = centroids(vectors, &partition)?;
    Ok((merged, partition))
}

//! Small f64-accumulating vector helpers shared across modules.
//!
//! Sums run left to right so results are reproducible bit for bit.

/// Dot product with each `f32` promoted to `f64` before multiplying.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc
}

pub(crate) fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0.0 when either vector has (near-)zero norm.
pub(crate) fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na < ZERO_NORM_EPS || nb < ZERO_NORM_EPS {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Norms below this are treated as zero vectors.
pub(crate) const ZERO_NORM_EPS: f64 = 1e-12;

/// Sequential mean over `f32` scores in a `f64` accumulator.
pub(crate) fn mean(scores: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for s in scores {
        acc += f64::from(*s);
    }
    acc / scores.len() as f64
}

/// Population standard deviation (divides by N).
pub(crate) fn population_std(scores: &[f32], mu: f64) -> f64 {
    let mut acc = 0.0f64;
    for s in scores {
        let d = f64::from(*s) - mu;
        acc += d * d;
    }
    (acc / scores.len() as f64).sqrt()
}

/// Min-max normalization to `[0, 1]`; a constant vector maps to all zeros.
pub(crate) fn minmax_normalize(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - lo) / range).collect()
}

//! Dense vector helpers for embeddings.

use alloc::vec::Vec;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Scales `v` to unit length in place. Returns `false` (leaving `v`
/// untouched) when the vector is zero or not finite.
pub fn normalize_in_place(v: &mut [f64]) -> bool {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Cosine similarity; 0 for mismatched dimensions or zero vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let denom = l2_norm(a) * l2_norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    dot(a, b) / denom
}

/// Cosine clamped to `[0, 1]`.
pub fn unit_cosine(a: &[f64], b: &[f64]) -> f64 {
    cosine(a, b).clamp(0.0, 1.0)
}

/// Element-wise mean of equally sized vectors, re-normalized to unit length.
pub fn mean_unit(vectors: &[Vec<f64>]) -> Option<Vec<f64>> {
    let dim = vectors.first()?.len();
    let mut acc = alloc::vec![0.0; dim];
    for v in vectors {
        if v.len() != dim {
            return None;
        }
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    normalize_in_place(&mut acc).then_some(acc)
}

pub fn is_unit(v: &[f64]) -> bool {
    (l2_norm(v) - 1.0).abs() <= 1e-6
}

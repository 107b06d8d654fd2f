use serde::{Deserialize, Serialize};

use crate::error::{CaeError, Result};
use crate::nn::dot;

/// How pairwise inner products are aggregated into an orthogonality penalty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrthoMode {
    /// Sum of absolute inner products.
    L1,
    /// Sum of squared inner products.
    #[default]
    L2,
}

impl OrthoMode {
    #[inline]
    pub fn penalty(self, s: f64) -> f64 {
        match self {
            OrthoMode::L1 => s.abs(),
            OrthoMode::L2 => s * s,
        }
    }

    /// Derivative of [`OrthoMode::penalty`]; `sign(0) = 0` for L1.
    #[inline]
    pub fn penalty_derivative(self, s: f64) -> f64 {
        match self {
            OrthoMode::L1 => {
                if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            OrthoMode::L2 => 2.0 * s,
        }
    }
}

/// `sum_{i<j} phi(<v_i, v_j>)` with `phi` chosen by `mode`.
pub fn pairwise_orthogonality(vectors: &[Vec<f64>], mode: OrthoMode) -> f64 {
    let mut total = 0.0;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            total += mode.penalty(dot(&vectors[i], &vectors[j]));
        }
    }
    total
}

/// Orthogonal projection of `v` onto the span of the orthonormal `basis`.
pub fn project_to_tangent(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for e in basis {
        let c = dot(v, e);
        out.iter_mut().zip(e).for_each(|(o, x)| *o += c * x);
    }
    out
}

const RANK_TOLERANCE: f64 = 1e-12;

/// Classical Gram-Schmidt, keeping order and span. Each vector is
/// orthogonalized twice against its predecessors for numerical stability.
/// With `normalize` the result is orthonormal.
pub fn gram_schmidt(vectors: &[Vec<f64>], normalize: bool) -> Result<Vec<Vec<f64>>> {
    let dim = vectors.first().map(Vec::len).unwrap_or(0);
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(CaeError::Shape("vectors must share a dimension".into()));
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    // unit copies of the outputs, used for the projections
    let mut units: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (index, v) in vectors.iter().enumerate() {
        let scale = dot(v, v).sqrt();
        let mut r = v.clone();
        for _ in 0..2 {
            let coeffs: Vec<f64> = units.iter().map(|u| dot(&r, u)).collect();
            for (u, c) in units.iter().zip(coeffs) {
                r.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&r, &r).sqrt();
        if scale == 0.0 || norm < RANK_TOLERANCE * scale.max(1.0) {
            return Err(CaeError::Rank {
                index,
                residual: norm,
            });
        }
        let unit: Vec<f64> = r.iter().map(|x| x / norm).collect();
        out.push(if normalize { unit.clone() } else { r });
        units.push(unit);
    }
    Ok(out)
}

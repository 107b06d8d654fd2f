use serde::{Deserialize, Serialize};

use crate::error::{CaeError, Result};

/// Per-feature bounds used for min-max scaling into the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationRecord {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| lo + v * (hi - lo))
            .collect()
    }
}

/// Provenance carried alongside the points; written as the JSON sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: Option<u64>,
    /// Standard deviation of the Gaussian noise added (0 when none).
    pub sigma: f64,
    pub normalization: Option<NormalizationRecord>,
    /// Row-major rows of the `n x k` embedding matrix when one was applied.
    pub unitary: Option<Vec<Vec<f64>>>,
}

/// `N` points in `R^n` plus optional named label columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<f64>,
    dim: usize,
    labels: Vec<f64>,
    label_names: Vec<String>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        Self::with_labels(points, dim, Vec::new(), Vec::new())
    }

    pub fn with_labels(
        points: Vec<f64>,
        dim: usize,
        labels: Vec<f64>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(CaeError::Shape(format!(
                "{} values cannot form points of dimension {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        if labels.len() != n * label_names.len() {
            return Err(CaeError::Shape(format!(
                "{} label values for {n} points and {} label columns",
                labels.len(),
                label_names.len()
            )));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(CaeError::Degenerate(format!(
                "non-finite coordinate in point {}",
                i / dim
            )));
        }
        Ok(Self {
            points,
            dim,
            labels,
            label_names,
            meta: DatasetMeta::default(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(CaeError::Shape("ragged rows".into()));
        }
        Self::new(rows.concat(), dim)
    }

    pub fn with_meta(mut self, meta: DatasetMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn raw_points(&self) -> &[f64] {
        &self.points
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn label_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.label_names.iter().position(|n| n == name)
    }

    pub fn label(&self, point: usize, column: usize) -> f64 {
        self.labels[point * self.label_names.len() + column]
    }

    pub fn labels_of(&self, point: usize) -> &[f64] {
        let m = self.label_names.len();
        &self.labels[point * m..(point + 1) * m]
    }

    pub fn label_column(&self, column: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.label(i, column)).collect()
    }

    /// Copy of the points at `indices`, labels and metadata kept.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let points = indices.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        let labels = indices.iter().flat_map(|&i| self.labels_of(i).iter().copied()).collect();
        Dataset {
            points,
            dim: self.dim,
            labels,
            label_names: self.label_names.clone(),
            meta: self.meta.clone(),
        }
    }

    /// Replaces the coordinates while keeping labels and metadata.
    pub fn map_points(&self, dim: usize, points: Vec<f64>) -> Result<Dataset> {
        let mut out = Dataset::with_labels(points, dim, self.labels.clone(), self.label_names.clone())?;
        if out.len() != self.len() {
            return Err(CaeError::Shape("point count changed".into()));
        }
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Per-coordinate mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            m.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(Dataset::new(vec![], 2).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], 2).is_err());
        assert!(Dataset::with_labels(vec![1.0, 2.0], 2, vec![1.0, 2.0], vec!["t".into()]).is_err());
    }

    #[test]
    fn select_keeps_labels() {
        let d = Dataset::with_labels(
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            2,
            vec![10.0, 11.0, 12.0],
            vec!["t".into()],
        )
        .unwrap();
        let s = d.select(&[2, 0]);
        assert_eq!(s.point(0), &[4.0, 5.0]);
        assert_eq!(s.label(1, 0), 10.0);
        assert_eq!(d.mean(), vec![2.0, 3.0]);
    }
}

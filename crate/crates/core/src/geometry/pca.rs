use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{CaeError, Result};

/// Eigen-decomposition of a centered sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPca {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[i]` belongs to `eigenvalues[i]`; unit norm, with the
    /// largest-magnitude entry positive.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Sample covariance with divisor `N - 1`, row-major `n x n`.
pub fn sample_covariance(points: &[&[f64]]) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(CaeError::Argument("covariance needs at least two points".into()));
    }
    let n = points[0].len();
    if points.iter().any(|p| p.len() != n) {
        return Err(CaeError::Shape("points must share a dimension".into()));
    }
    let count = points.len() as f64;
    let mut mean = vec![0.0; n];
    for p in points {
        mean.iter_mut().zip(*p).for_each(|(m, v)| *m += v / count);
    }
    let mut cov = vec![0.0; n * n];
    for p in points {
        for a in 0..n {
            let da = p[a] - mean[a];
            for b in a..n {
                cov[a * n + b] += da * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..n {
        for b in a..n {
            let v = cov[a * n + b] / (count - 1.0);
            cov[a * n + b] = v;
            cov[b * n + a] = v;
        }
    }
    Ok(cov)
}

pub fn local_pca(points: &[&[f64]]) -> Result<LocalPca> {
    let cov = sample_covariance(points)?;
    let n = points[0].len();
    if cov.iter().all(|&v| v == 0.0) {
        return Err(CaeError::Degenerate("all points are identical".into()));
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &cov));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    for &i in &order {
        // round-off can leave tiny negative values for a PSD matrix
        eigenvalues.push(eig.eigenvalues[i].max(0.0));
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvectors.push(v);
    }
    Ok(LocalPca {
        eigenvalues,
        eigenvectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_configuration_has_a_null_direction() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [1.0, 1.0, 0.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let pca = local_pca(&refs).unwrap();
        assert!(pca.eigenvalues[2].abs() < 1e-14);
        let e = &pca.eigenvectors[2];
        assert!((e[2].abs() - 1.0).abs() < 1e-12);
        assert!(e[2] > 0.0);
    }

    #[test]
    fn segment_is_rank_one() {
        let pts: Vec<[f64; 3]> = (0..6).map(|i| [i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let pca = local_pca(&refs).unwrap();
        assert!(pca.eigenvalues[0] > 1.0);
        assert!(pca.eigenvalues[1] < 1e-12 && pca.eigenvalues[2] < 1e-12);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts = [[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        assert!(matches!(local_pca(&refs), Err(CaeError::Degenerate(_))));
        assert!(local_pca(&refs[..1]).is_err());
    }
}

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::{Dataset, NormalizationRecord};
use crate::error::{CaeError, Result};
use crate::geometry::gram_schmidt;

/// Random `n_target x k` matrix with orthonormal columns, from Gram-Schmidt
/// on a seeded Gaussian matrix. Returned as rows.
pub fn random_truncated_unitary(n_target: usize, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_target < k {
        return Err(CaeError::Argument(format!(
            "cannot embed dimension {k} into {n_target}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n_target).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let q = gram_schmidt(&columns, true)?;
    Ok((0..n_target).map(|r| q.iter().map(|c| c[r]).collect()).collect())
}

/// Maps every point through `x -> Q x` with a random isometric `Q`.
pub fn embed_unitary(data: &Dataset, n_target: usize, seed: u64) -> Result<Dataset> {
    let k = data.dim();
    let q = random_truncated_unitary(n_target, k, seed)?;
    let mut points = Vec::with_capacity(data.len() * n_target);
    for p in data.points() {
        points.extend(q.iter().map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()));
    }
    let mut out = data.map_points(n_target, points)?;
    out.meta.unitary = Some(q);
    Ok(out)
}

/// Adds i.i.d. `N(0, sigma^2)` to every coordinate.
pub fn add_gaussian_noise(data: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(sigma >= 0.0) {
        return Err(CaeError::Argument(format!("noise level must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(data.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = data
        .raw_points()
        .iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v + sigma * e
        })
        .collect();
    let mut out = data.map_points(data.dim(), points)?;
    out.meta.sigma = sigma;
    Ok(out)
}

/// Min-max scales every feature onto `[0, 1]`.
pub fn normalize_unit_cube(data: &Dataset) -> Result<(Dataset, NormalizationRecord)> {
    let n = data.dim();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for p in data.points() {
        for j in 0..n {
            min[j] = min[j].min(p[j]);
            max[j] = max[j].max(p[j]);
        }
    }
    if let Some(column) = (0..n).find(|&j| max[j] <= min[j]) {
        return Err(CaeError::DegenerateFeature { column });
    }
    let record = NormalizationRecord { min, max };
    let mut points: Vec<f64> = data.points().flat_map(|p| record.apply(p)).collect();
    // pin the extremes so the range is exactly [0, 1]
    for j in 0..n {
        for i in 0..data.len() {
            let v = data.point(i)[j];
            if v == record.min[j] {
                points[i * n + j] = 0.0;
            } else if v == record.max[j] {
                points[i * n + j] = 1.0;
            }
        }
    }
    let mut out = data.map_points(n, points)?;
    out.meta.normalization = Some(record.clone());
    Ok((out, record))
}

pub fn denormalize(data: &Dataset, record: &NormalizationRecord) -> Result<Dataset> {
    if record.min.len() != data.dim() {
        return Err(CaeError::Shape("normalization record has the wrong dimension".into()));
    }
    let points = data.points().flat_map(|p| record.invert(p)).collect();
    data.map_points(data.dim(), points)
}

/// Seeded shuffle, then the first `round(fraction * N)` points go to train.
pub fn split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CaeError::Argument(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let (train, test) = split_indices(data.len(), fraction, seed);
    if train.is_empty() || test.is_empty() {
        return Err(CaeError::Argument("split leaves one side empty".into()));
    }
    Ok((data.select(&train), data.select(&test)))
}

pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * fraction).round() as usize;
    let test = idx.split_off(cut.min(n));
    (idx, test)
}

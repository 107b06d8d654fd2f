use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{CaeError, Result};

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest points to `query_index` by Euclidean distance, excluding the
/// query itself. Ties go to the lower index. Exhaustive search.
pub fn knn(data: &Dataset, query_index: usize, k: usize) -> Result<Vec<usize>> {
    if query_index >= data.len() {
        return Err(CaeError::Argument(format!("query index {query_index} out of range")));
    }
    if k >= data.len() {
        return Err(CaeError::Argument(format!(
            "k = {k} must be smaller than the number of points {}",
            data.len()
        )));
    }
    let q = data.point(query_index);
    let mut cand: Vec<(f64, usize)> = (0..data.len())
        .filter(|&i| i != query_index)
        .map(|i| (squared_distance(q, data.point(i)), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() && k > 0 {
        cand.select_nth_unstable_by(k - 1, cmp);
    }
    cand.truncate(k);
    cand.sort_by(cmp);
    Ok(cand.into_iter().map(|(_, i)| i).collect())
}

/// All points within distance `tau` of the query, the query included.
pub fn radius_neighbors(data: &Dataset, query_index: usize, tau: f64) -> Vec<usize> {
    let q = data.point(query_index);
    let t2 = tau * tau;
    (0..data.len())
        .filter(|&i| squared_distance(q, data.point(i)) <= t2)
        .collect()
}

/// Lloyd's k-means with farthest-point seeding. The first center is a
/// seeded random point; each next center is the point farthest from the
/// chosen ones (lower index on ties). Returns the cluster of every point.
pub fn kmeans(data: &Dataset, clusters: usize, seed: u64, max_iter: usize) -> Result<Vec<usize>> {
    let n_pts = data.len();
    if clusters == 0 || clusters > n_pts {
        return Err(CaeError::Argument(format!(
            "cluster count {clusters} must be in 1..={n_pts}"
        )));
    }
    let dim = data.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n_pts);
    let mut centers: Vec<Vec<f64>> = vec![data.point(first).to_vec()];
    let mut nearest: Vec<f64> = (0..n_pts)
        .map(|i| squared_distance(data.point(i), &centers[0]))
        .collect();
    while centers.len() < clusters {
        let far = (0..n_pts).fold(0, |best, i| if nearest[i] > nearest[best] { i } else { best });
        centers.push(data.point(far).to_vec());
        let c = centers.last().unwrap();
        for i in 0..n_pts {
            nearest[i] = nearest[i].min(squared_distance(data.point(i), c));
        }
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        (0..n_pts)
            .map(|i| {
                let p = data.point(i);
                (0..centers.len()).fold(0, |best, c| {
                    if squared_distance(p, &centers[c]) < squared_distance(p, &centers[best]) {
                        c
                    } else {
                        best
                    }
                })
            })
            .collect()
    };

    let mut labels = assign(&centers);
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; clusters];
        let mut counts = vec![0usize; clusters];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            sums[c].iter_mut().zip(data.point(i)).for_each(|(s, v)| *s += v);
        }
        for c in 0..clusters {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_ordering() {
        let d = Dataset::new(vec![0.0, 1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(knn(&d, 0, 2).unwrap(), vec![1, 2]);
        assert_eq!(knn(&d, 2, 3).unwrap(), vec![1, 3, 0]);
        assert!(knn(&d, 0, 4).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        let d = Dataset::new(vec![0.0, 5.0, 1.0, -1.0, 1.0], 1).unwrap();
        assert_eq!(knn(&d, 0, 1).unwrap(), vec![2]);
        assert_eq!(knn(&d, 0, 3).unwrap(), vec![2, 3, 4]);
    }

    #[test]
    fn radius_includes_the_query() {
        let d = Dataset::new(vec![0.0, 0.5, 2.0], 1).unwrap();
        assert_eq!(radius_neighbors(&d, 0, 1.0), vec![0, 1]);
    }

    #[test]
    fn kmeans_separates_two_blobs() {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.extend([0.01 * i as f64, 0.0]);
        }
        for i in 0..10 {
            pts.extend([10.0 + 0.01 * i as f64, 0.0]);
        }
        let d = Dataset::new(pts, 2).unwrap();
        let labels = kmeans(&d, 2, 3, 100).unwrap();
        assert!(labels[..10].iter().all(|&c| c == labels[0]));
        assert!(labels[10..].iter().all(|&c| c == labels[10]));
        assert_ne!(labels[0], labels[10]);
        assert_eq!(labels, kmeans(&d, 2, 3, 100).unwrap());
    }
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::neighbors::{kmeans, knn, radius_neighbors};
use super::pca::local_pca;
use crate::data::Dataset;
use crate::error::{CaeError, Result};

const KMEANS_MAX_ITER: usize = 100;
/// A PCA direction counts toward the rank when its eigenvalue exceeds this
/// fraction of the leading one.
const RANK_THRESHOLD: f64 = 1e-12;

/// How the neighborhood of each point is chosen for local PCA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NeighborhoodSpec {
    /// The point and its `k` nearest neighbors.
    KNearest { k: usize },
    /// All points within distance `tau`.
    Radius { tau: f64 },
    /// Points grouped by k-means; every member of a cluster shares its frame.
    KMeansClusters { clusters: usize, seed: u64 },
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        NeighborhoodSpec::KNearest { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentFrame {
    pub index: usize,
    pub base: Vec<f64>,
    /// Orthonormal rows spanning the estimated tangent space.
    pub basis: Vec<Vec<f64>>,
    /// Leading local PCA eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub neighbors: Vec<usize>,
}

impl TangentFrame {
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        super::project_to_tangent(v, &self.basis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentFrameSet {
    pub dimension: usize,
    pub ambient: usize,
    pub frames: Vec<TangentFrame>,
}

impl TangentFrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, point: usize) -> &TangentFrame {
        &self.frames[point]
    }

    /// Frames for the points at `indices`, renumbered from zero.
    pub fn select(&self, indices: &[usize]) -> TangentFrameSet {
        let frames = indices
            .iter()
            .enumerate()
            .map(|(new, &old)| TangentFrame {
                index: new,
                ..self.frames[old].clone()
            })
            .collect();
        TangentFrameSet {
            dimension: self.dimension,
            ambient: self.ambient,
            frames,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| CaeError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CaeError::io(path, e))?;
        Self::from_json(&text)
    }
}

fn frame_from(
    data: &Dataset,
    index: usize,
    members: &[usize],
    dimension: usize,
) -> Result<TangentFrame> {
    let n = data.dim();
    let pts: Vec<&[f64]> = members.iter().map(|&i| data.point(i)).collect();
    let degenerate = |rank| CaeError::DegenerateTangent {
        point: index,
        rank,
        dimension,
    };
    if pts.len() < 2 {
        return Err(degenerate(0));
    }
    let pca = local_pca(&pts).map_err(|_| degenerate(0))?;
    let lead = pca.eigenvalues[0];
    let rank = pca
        .eigenvalues
        .iter()
        .filter(|&&l| l > RANK_THRESHOLD * lead)
        .count();
    if rank < dimension {
        return Err(degenerate(rank));
    }
    let keep = members.len().min(n);
    Ok(TangentFrame {
        index,
        base: data.point(index).to_vec(),
        basis: pca.eigenvectors[..dimension].to_vec(),
        eigenvalues: pca.eigenvalues[..keep].to_vec(),
        neighbors: members.to_vec(),
    })
}

/// Local PCA tangent estimate of dimension `dimension` at every point.
pub fn tangent_frames(
    data: &Dataset,
    nbhd: NeighborhoodSpec,
    dimension: usize,
) -> Result<TangentFrameSet> {
    if dimension == 0 {
        return Err(CaeError::config("frames.dimension", "tangent dimension must be positive"));
    }
    if dimension > data.dim() {
        return Err(CaeError::config(
            "frames.dimension",
            format!("tangent dimension {dimension} exceeds ambient {}", data.dim()),
        ));
    }
    let frames = match nbhd {
        NeighborhoodSpec::KNearest { k } => {
            if k < dimension + 1 {
                return Err(CaeError::config(
                    "frames.k",
                    format!("k = {k} must be at least dimension + 1 = {}", dimension + 1),
                ));
            }
            (0..data.len())
                .map(|i| {
                    let mut members = vec![i];
                    members.extend(knn(data, i, k)?);
                    frame_from(data, i, &members, dimension)
                })
                .collect::<Result<Vec<_>>>()?
        }
        NeighborhoodSpec::Radius { tau } => {
            if !(tau > 0.0) {
                return Err(CaeError::config("frames.tau", "radius must be positive"));
            }
            (0..data.len())
                .map(|i| frame_from(data, i, &radius_neighbors(data, i, tau), dimension))
                .collect::<Result<Vec<_>>>()?
        }
        NeighborhoodSpec::KMeansClusters { clusters, seed } => {
            let labels = kmeans(data, clusters, seed, KMEANS_MAX_ITER)?;
            let mut shared: Vec<Option<TangentFrame>> = vec![None; clusters];
            for c in 0..clusters {
                let members: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == c).collect();
                if let Some(&first) = members.first() {
                    shared[c] = Some(frame_from(data, first, &members, dimension)?);
                }
            }
            (0..data.len())
                .map(|i| {
                    let f = shared[labels[i]].as_ref().expect("every label has members");
                    TangentFrame {
                        index: i,
                        base: data.point(i).to_vec(),
                        ..f.clone()
                    }
                })
                .collect()
        }
    };
    Ok(TangentFrameSet {
        dimension,
        ambient: data.dim(),
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{circle_point, gen_circle};

    #[test]
    fn circle_frames_follow_the_analytic_tangent() {
        // evenly spaced with an offset; i.i.d. uniform draws leave gaps wide
        // enough to tilt a 6-point PCA by up to ~9 degrees
        let angles: Vec<f64> = (0..100).map(|i| 0.3 + i as f64 * std::f64::consts::TAU / 100.0).collect();
        let pts: Vec<f64> = angles.iter().flat_map(|&t| circle_point(t)).collect();
        let d = Dataset::new(pts, 2).unwrap();
        let set = tangent_frames(&d, NeighborhoodSpec::KNearest { k: 5 }, 1).unwrap();
        let max_angle = 5f64.to_radians();
        for (i, f) in set.frames.iter().enumerate() {
            let t = angles[i];
            let tangent = [-t.sin(), t.cos()];
            let c = (f.basis[0][0] * tangent[0] + f.basis[0][1] * tangent[1]).abs();
            assert!(c.min(1.0).acos() < max_angle, "point {i}");
        }
    }

    #[test]
    fn plane_frames_span_the_plane() {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                let (u, v) = (i as f64 * 0.3, j as f64 * 0.2 + 0.01 * i as f64);
                // plane spanned by (1, 1, 0) and (0, 1, 1)
                pts.extend([u, u + v, v]);
            }
        }
        let d = Dataset::new(pts, 3).unwrap();
        let normal = [1.0 / 3f64.sqrt(), -1.0 / 3f64.sqrt(), 1.0 / 3f64.sqrt()];
        for spec in [
            NeighborhoodSpec::KNearest { k: 6 },
            NeighborhoodSpec::Radius { tau: 0.7 },
            NeighborhoodSpec::KMeansClusters { clusters: 3, seed: 1 },
        ] {
            let set = tangent_frames(&d, spec, 2).unwrap();
            for f in &set.frames {
                for e in &f.basis {
                    let off: f64 = e.iter().zip(&normal).map(|(a, b)| a * b).sum();
                    assert!(off.abs() < 1e-8, "{spec:?}");
                }
            }
        }
    }

    #[test]
    fn full_dimension_gives_full_bases() {
        let d = gen_circle(30, 1).unwrap();
        let set = tangent_frames(&d, NeighborhoodSpec::KNearest { k: 4 }, 2).unwrap();
        for f in &set.frames {
            assert_eq!(f.basis.len(), 2);
            let g = f.basis[0][0] * f.basis[1][0] + f.basis[0][1] * f.basis[1][1];
            assert!(g.abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_neighborhood_is_reported() {
        let d = Dataset::new((0..10).flat_map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect(), 3).unwrap();
        match tangent_frames(&d, NeighborhoodSpec::KNearest { k: 4 }, 2) {
            Err(CaeError::DegenerateTangent { point: 0, rank: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_parameters_are_config_errors() {
        let d = gen_circle(10, 1).unwrap();
        assert!(matches!(
            tangent_frames(&d, NeighborhoodSpec::KNearest { k: 5 }, 0),
            Err(CaeError::Config { .. })
        ));
        assert!(matches!(
            tangent_frames(&d, NeighborhoodSpec::KNearest { k: 1 }, 1),
            Err(CaeError::Config { .. })
        ));
        assert!(tangent_frames(&d, NeighborhoodSpec::KNearest { k: 3 }, 3).is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = gen_circle(12, 1).unwrap();
        let set = tangent_frames(&d, NeighborhoodSpec::KNearest { k: 3 }, 1).unwrap();
        assert_eq!(TangentFrameSet::from_json(&set.to_json().unwrap()).unwrap(), set);
    }
}

//! Neighborhoods, local PCA tangent frames, projections and Gram-Schmidt.

mod frames;
mod neighbors;
mod ortho;
mod pca;

pub use frames::{tangent_frames, NeighborhoodSpec, TangentFrame, TangentFrameSet};
pub use neighbors::{kmeans, knn, radius_neighbors, squared_distance};
pub use ortho::{gram_schmidt, pairwise_orthogonality, project_to_tangent, OrthoMode};
pub use pca::{local_pca, sample_covariance, LocalPca};

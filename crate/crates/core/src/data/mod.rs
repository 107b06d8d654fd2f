//! Datasets: synthetic generators, transforms and file I/O.

mod dataset;
mod generators;
pub mod io;
mod transforms;

pub use dataset::{Dataset, DatasetMeta, NormalizationRecord};
pub use generators::{
    circle_point, gen_circle, gen_hypersurface3, gen_s_curve, gen_swiss_roll, gen_toy,
    gen_toy_scaled, gen_toy_staged, s_curve_point, s_curve_rescale, toy_surface, NoiseStage,
};
pub use io::{load_csv, load_dataset, save_csv, save_dataset};
pub use transforms::{
    add_gaussian_noise, denormalize, embed_unitary, normalize_unit_cube, random_truncated_unitary,
    split, split_indices,
};

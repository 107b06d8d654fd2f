//! Dimension inference, frozen-latent evaluation and robustness sweeps.

mod dimension;
mod stats;
mod sweep;

pub use dimension::{
    classify_components, decoder_column_cosine, freeze_and_reconstruct, frozen_reconstruction,
    latent_means, rank_components, tangent_gradient_cosine, topk_comparison, DimensionReport,
    TopKComparison, DEFAULT_COLLAPSE_THRESHOLD,
};
pub use stats::{median, pearson, ranks, spearman};
pub use sweep::{
    cell_data, median_ratio, noise_sigma, robustness_architecture, robustness_sweep, run_cell,
    save_sweep_csv, sweep_csv, width_rule, RobustnessCell, SweepKey, SweepSpec, SWEEP_CSV_HEADER,
    TOY_DIAMETER,
};

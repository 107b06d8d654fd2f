//! Configured end-to-end runs: presets, datasets, training and artifacts.

mod config;
mod presets;
mod run;

pub use config::*;
pub use presets::{preset, PRESET_NAMES};
pub use run::*;

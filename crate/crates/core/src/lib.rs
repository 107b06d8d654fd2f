pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod gradcheck;
pub mod nn;
pub mod training;

pub use error::{CaeError, Result};

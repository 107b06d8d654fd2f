use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dimension::{classify_components, topk_comparison, DEFAULT_COLLAPSE_THRESHOLD};
use super::stats::median;
use crate::data::{add_gaussian_noise, embed_unitary, Dataset};
use crate::error::{CaeError, Result};
use crate::nn::ActivationKind;
use crate::training::{
    train_with_loss, Architecture, CaeModel, LossSpec, StopMode, StopReason, TrainConfig,
};

/// Approximate diameter of the unit-cube toy data; noise is `sigma = l * d`.
pub const TOY_DIAMETER: f64 = 1.732_050_807_568_877_2;

/// Hidden width `10 * ceil(sqrt(n))`.
pub fn width_rule(ambient: usize) -> usize {
    let mut m = 0;
    while m * m < ambient {
        m += 1;
    }
    10 * m
}

pub fn noise_sigma(level: f64) -> f64 {
    level * TOY_DIAMETER
}

/// Five tanh layers followed by two linear layers, all of width `width_rule(n)`.
pub fn robustness_architecture(ambient: usize) -> Architecture {
    let mut activations = vec![ActivationKind::Tanh; 5];
    activations.extend([ActivationKind::Identity; 2]);
    Architecture {
        depth: 7,
        width: width_rule(ambient),
        activations,
        init_scale: 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub dims: Vec<usize>,
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Latent width of every cell.
    #[serde(default = "three")]
    pub latent: usize,
    pub alpha: f64,
    /// Stop mode is replaced per cell by the noise-aware threshold.
    pub training: TrainConfig,
    /// Worker threads; 0 uses the rayon default.
    #[serde(default)]
    pub jobs: usize,
}

fn three() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepKey {
    pub ambient: usize,
    pub level: f64,
    pub seed: u64,
}

impl SweepSpec {
    /// Cells in `(n, l, seed)` order. Duplicate keys are an error.
    pub fn keys(&self) -> Result<Vec<SweepKey>> {
        if self.dims.is_empty() || self.levels.is_empty() || self.seeds.is_empty() {
            return Err(CaeError::config("sweep", "grid is empty"));
        }
        let mut keys = Vec::new();
        let mut seen = BTreeSet::new();
        for &ambient in &self.dims {
            for &level in &self.levels {
                if !(level >= 0.0 && level.is_finite()) {
                    return Err(CaeError::config("sweep.levels", format!("invalid noise level {level}")));
                }
                for &seed in &self.seeds {
                    if !seen.insert((ambient, level.to_bits(), seed)) {
                        return Err(CaeError::config(
                            "sweep",
                            format!("duplicate cell (n={ambient}, l={level}, seed={seed})"),
                        ));
                    }
                    keys.push(SweepKey { ambient, level, seed });
                }
            }
        }
        keys.sort_by(|a, b| {
            a.ambient
                .cmp(&b.ambient)
                .then(a.level.total_cmp(&b.level))
                .then(a.seed.cmp(&b.seed))
        });
        Ok(keys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCell {
    pub ambient: usize,
    pub level: f64,
    pub sigma: f64,
    pub seed: u64,
    pub width: usize,
    pub full_error: f64,
    pub top2_error: f64,
    pub inferred_dimension: Option<usize>,
    pub stop_reason: Option<StopReason>,
    pub epochs: usize,
    /// Set when the cell could not be completed.
    pub failure: Option<String>,
}

impl RobustnessCell {
    pub fn ratio(&self) -> Option<f64> {
        (self.failure.is_none() && self.full_error > 0.0).then(|| self.top2_error / self.full_error)
    }
}

/// The embedded, noisy training set of one cell.
pub fn cell_data(base: &Dataset, key: &SweepKey) -> Result<Dataset> {
    let embedded = if key.ambient == base.dim() {
        base.clone()
    } else {
        embed_unitary(base, key.ambient, key.seed)?
    };
    add_gaussian_noise(&embedded, noise_sigma(key.level), key.seed.wrapping_add(1))
}

pub fn run_cell(base: &Dataset, spec: &SweepSpec, key: &SweepKey) -> RobustnessCell {
    let sigma = noise_sigma(key.level);
    let width = width_rule(key.ambient);
    let mut cell = RobustnessCell {
        ambient: key.ambient,
        level: key.level,
        sigma,
        seed: key.seed,
        width,
        full_error: f64::NAN,
        top2_error: f64::NAN,
        inferred_dimension: None,
        stop_reason: None,
        epochs: 0,
        failure: None,
    };
    let result = (|| -> Result<()> {
        let data = cell_data(base, key)?;
        let arch = robustness_architecture(key.ambient);
        let model = CaeModel::init(&arch, key.ambient, spec.latent, key.seed)?;
        let loss = LossSpec {
            alpha: spec.alpha,
            ..LossSpec::default()
        };
        let cfg = TrainConfig {
            seed: key.seed,
            stop_mode: StopMode::Robustness {
                sigma,
                ambient: key.ambient,
            },
            ..spec.training.clone()
        };
        let (model, trace) = match train_with_loss(&data, model, &loss, &cfg) {
            Ok(v) => v,
            Err(abort) => {
                cell.stop_reason = abort.trace.stop_reason;
                cell.epochs = abort.trace.len();
                return Err(abort.error);
            }
        };
        cell.stop_reason = trace.stop_reason;
        cell.epochs = trace.len();
        cell.inferred_dimension = Some(classify_components(&trace, DEFAULT_COLLAPSE_THRESHOLD)?.inferred_dimension);
        let cmp = topk_comparison(&model, &data, 2.min(spec.latent))?;
        cell.full_error = cmp.full_error;
        cell.top2_error = cmp.topk_error;
        Ok(())
    })();
    if let Err(e) = result {
        cell.failure = Some(e.to_string());
    }
    cell
}

/// Trains one model per `(n, l, seed)` cell on `base` embedded into `R^n`
/// with noise `l * sqrt(3)`. Failed cells carry a failure marker.
pub fn robustness_sweep(base: &Dataset, spec: &SweepSpec) -> Result<Vec<RobustnessCell>> {
    let keys = spec.keys()?;
    if spec.dims.iter().any(|&n| n < base.dim()) {
        return Err(CaeError::config("sweep.dims", "dimensions must be at least the base dimension"));
    }
    spec.training.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| CaeError::Argument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| keys.par_iter().map(|k| run_cell(base, spec, k)).collect()))
}

pub const SWEEP_CSV_HEADER: &str = "n,l,sigma,seed,w,full_err,top2_err,inferred_dim,stop_reason,epochs,failure";

pub fn sweep_csv(cells: &[RobustnessCell]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&format!(
            "{},{},{:e},{},{},{:e},{:e},{},{},{},{}\n",
            c.ambient,
            c.level,
            c.sigma,
            c.seed,
            c.width,
            c.full_error,
            c.top2_error,
            c.inferred_dimension.map(|d| d.to_string()).unwrap_or_default(),
            c.stop_reason.map(|r| r.as_str()).unwrap_or(""),
            c.epochs,
            c.failure.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        ));
    }
    out
}

pub fn save_sweep_csv(cells: &[RobustnessCell], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, sweep_csv(cells)).map_err(|e| CaeError::io(path, e))
}

/// Median top-2/full ratio of the completed cells at `(n, l)`.
pub fn median_ratio(cells: &[RobustnessCell], ambient: usize, level: f64) -> Option<f64> {
    let ratios: Vec<f64> = cells
        .iter()
        .filter(|c| c.ambient == ambient && c.level == level)
        .filter_map(|c| c.ratio())
        .collect();
    median(&ratios)
}

//! Built-in experiment configurations.

use super::config::*;
use crate::data::NoiseStage;
use crate::error::{CaeError, Result};
use crate::geometry::{NeighborhoodSpec, OrthoMode};
use crate::nn::ActivationKind::{self, HardTanh, Identity, Tanh};

pub const PRESET_NAMES: [&str; 7] = ["toy", "circle", "s_curve", "s_curve_invariance", "ks", "ci", "robustness"];

fn arch(depth: usize, width: usize, activations: Vec<ActivationKind>) -> ArchitectureConfig {
    ArchitectureConfig {
        depth,
        width,
        activations,
        init_scale: 1.0,
        latent: None,
    }
}

fn dataset(generator: GeneratorKind, points: usize) -> DatasetConfig {
    DatasetConfig {
        generator,
        points,
        sigma: 0.0,
        noise_stage: NoiseStage::Raw,
        path: None,
        embed_dim: None,
        normalize: false,
        train_fraction: None,
        test_points: 0,
    }
}

fn loss(alpha: f64, ortho_mode: OrthoMode) -> LossConfig {
    LossConfig {
        alpha,
        ortho_mode,
        gradient_space: GradientSpaceKind::Ambient,
        frames: None,
        supervised: None,
        pairs: None,
    }
}

fn training(epochs_max: usize, tolerance: f64, batch_size: usize) -> TrainingConfig {
    TrainingConfig {
        epochs_max,
        tolerance,
        plateau_patience: 1500,
        learning_rate: 1e-3,
        batch_size,
        stop: StopKind::Tolerance,
    }
}

fn base(name: &str, dataset: DatasetConfig, architecture: ArchitectureConfig, loss: LossConfig, training: TrainingConfig) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        seed: 0,
        dataset,
        architecture,
        loss,
        training,
        posthoc: None,
        outputs: OutputsConfig::default(),
        sweep: None,
    }
}

fn s_curve_arch() -> ArchitectureConfig {
    arch(7, 10, vec![Tanh, HardTanh, Tanh, HardTanh, Tanh, Identity, Identity])
}

/// The named preset. File-backed presets (`ks`, `ci`) still need `dataset.path`.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    Ok(match name {
        "toy" => {
            let mut c = base(
                "toy",
                DatasetConfig {
                    sigma: 0.1,
                    test_points: 10_000,
                    ..dataset(GeneratorKind::Toy, 2500)
                },
                arch(5, 10, vec![Tanh; 5]),
                loss(10.0, OrthoMode::L2),
                training(20_000, 3e-4, 64),
            );
            c.posthoc = Some(PosthocConfig {
                alpha: 1.0,
                training: TrainingConfig {
                    tolerance: 1e-12,
                    ..training(300, 1e-12, 64)
                },
            });
            c.outputs.level_sets = Some(LevelSetConfig { points: 50, levels: 5 });
            c
        }
        "circle" => {
            let mut c = base(
                "circle",
                dataset(GeneratorKind::Circle, 100),
                arch(7, 10, vec![Tanh, Tanh, Tanh, Tanh, Tanh, Identity, Identity]),
                loss(1.0, OrthoMode::L1),
                training(20_000, 2e-4, 20),
            );
            c.outputs.dense_validation = Some(1000);
            c
        }
        "s_curve" => {
            let mut c = base(
                "s_curve",
                DatasetConfig {
                    test_points: 10_000,
                    ..dataset(GeneratorKind::SCurve, 3000)
                },
                s_curve_arch(),
                loss(1.0, OrthoMode::L1),
                training(3000, 2e-2, 64),
            );
            c.outputs.level_sets = Some(LevelSetConfig { points: 50, levels: 5 });
            c
        }
        "s_curve_invariance" => {
            let mut a = s_curve_arch();
            a.latent = Some(2);
            let mut l = loss(1.0, OrthoMode::L1);
            l.gradient_space = GradientSpaceKind::TangentProjected;
            l.frames = Some(FramesConfig {
                dimension: 2,
                neighborhood: NeighborhoodSpec::KNearest { k: 10 },
            });
            l.supervised = Some(SupervisedConfig {
                latent: 1,
                label: "y".into(),
                weight: 1.0,
            });
            base(
                "s_curve_invariance",
                DatasetConfig {
                    test_points: 10_000,
                    ..dataset(GeneratorKind::SCurve, 3000)
                },
                a,
                l,
                training(3000, 2e-2, 64),
            )
        }
        "ks" | "ci" => {
            let (fraction, tolerance) = if name == "ks" { (0.5, 2.9e-4) } else { (0.8, 6.7e-4) };
            base(
                name,
                DatasetConfig {
                    normalize: true,
                    train_fraction: Some(fraction),
                    ..dataset(GeneratorKind::File, 0)
                },
                arch(5, 20, vec![Tanh; 5]),
                loss(10.0, OrthoMode::L2),
                training(5000, tolerance, 64),
            )
        }
        "robustness" => {
            let mut c = base(
                "robustness",
                dataset(GeneratorKind::Toy, 500),
                arch(7, 20, vec![Tanh, Tanh, Tanh, Tanh, Tanh, Identity, Identity]),
                loss(10.0, OrthoMode::L2),
                training(1500, 1e-4, 64),
            );
            c.training.stop = StopKind::Robustness;
            c.sweep = Some(SweepConfig {
                dims: vec![3, 5, 10, 20, 40, 100],
                levels: vec![0.01, 0.02, 0.04, 0.08, 0.16, 0.32],
                seeds: vec![0, 1, 2],
                latent: 3,
                alpha: 10.0,
                training: TrainingConfig {
                    stop: StopKind::Robustness,
                    ..training(1500, 1e-4, 64)
                },
                jobs: 0,
            });
            c
        }
        other => {
            return Err(CaeError::config(
                "preset",
                format!("unknown preset `{other}`; expected one of {}", PRESET_NAMES.join(", ")),
            ))
        }
    })
}

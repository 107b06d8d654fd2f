//! Experiment configuration: a TOML document, optionally layered on a preset.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::NoiseStage;
use crate::diagnostics::SweepSpec;
use crate::error::{CaeError, Result};
use crate::geometry::{NeighborhoodSpec, OrthoMode};
use crate::nn::ActivationKind;
use crate::training::{Architecture, StopMode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Toy,
    Circle,
    SCurve,
    SwissRoll,
    /// A 3-manifold in `R^4`, see [`crate::data::gen_hypersurface3`].
    Hypersurface,
    /// Points read from `dataset.path`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub generator: GeneratorKind,
    #[serde(default)]
    pub points: usize,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub noise_stage: NoiseStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Embed into this many dimensions with a random isometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    /// Min-max scale into the unit cube (file data).
    #[serde(default)]
    pub normalize: bool,
    /// Keep this fraction for training and test on the rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
    /// Size of a fresh test sample from the same generator; 0 for none.
    #[serde(default)]
    pub test_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub depth: usize,
    pub width: usize,
    pub activations: Vec<ActivationKind>,
    #[serde(default = "one")]
    pub init_scale: f64,
    /// Latent width; defaults to the ambient dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<usize>,
}

fn one() -> f64 {
    1.0
}

impl ArchitectureConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            depth: self.depth,
            width: self.width,
            activations: self.activations.clone(),
            init_scale: self.init_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientSpaceKind {
    Ambient,
    TangentProjected,
    DecoderJacobian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramesConfig {
    pub dimension: usize,
    #[serde(default)]
    pub neighborhood: NeighborhoodSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedConfig {
    /// 0-based latent index.
    pub latent: usize,
    /// Dataset label column name.
    pub label: String,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
    #[serde(default)]
    pub ortho_mode: OrthoMode,
    pub gradient_space: GradientSpaceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<FramesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervised: Option<SupervisedConfig>,
    /// Explicit latent pairs; all pairs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    /// Total loss below `tolerance`.
    Tolerance,
    /// Reconstruction below the noise-aware threshold for `dataset.sigma`.
    Robustness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs_max: usize,
    pub tolerance: f64,
    pub plateau_patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub stop: StopKind,
}

impl TrainingConfig {
    /// `sigma` and `ambient` feed the robustness threshold.
    pub fn train_config(&self, seed: u64, sigma: f64, ambient: usize) -> TrainConfig {
        TrainConfig {
            epochs_max: self.epochs_max,
            tolerance: self.tolerance,
            plateau_patience: self.plateau_patience,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
            stop_mode: match self.stop {
                StopKind::Tolerance => StopMode::Tolerance,
                StopKind::Robustness => StopMode::Robustness { sigma, ambient },
            },
        }
    }
}

/// Decoder-column orthogonalization after the main run, restricted to the
/// active latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosthocConfig {
    pub alpha: f64,
    pub training: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSetConfig {
    /// Decoded points per curve.
    pub points: usize,
    /// Quantile levels of the other active latent.
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    /// Run directory; relative paths resolve against the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub latents: bool,
    #[serde(default = "yes")]
    pub checkpoint: bool,
    #[serde(default = "yes")]
    pub dataset: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_sets: Option<LevelSetConfig>,
    /// Points on the dense validation circle (circle data only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_validation: Option<usize>,
}

fn yes() -> bool {
    true
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            dir: None,
            latents: true,
            checkpoint: true,
            dataset: true,
            level_sets: None,
            dense_validation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "three")]
    pub latent: usize,
    pub alpha: f64,
    pub training: TrainingConfig,
    #[serde(default)]
    pub jobs: usize,
}

fn three() -> usize {
    3
}

impl SweepConfig {
    pub fn spec(&self) -> SweepSpec {
        SweepSpec {
            dims: self.dims.clone(),
            levels: self.levels.clone(),
            seeds: self.seeds.clone(),
            latent: self.latent,
            alpha: self.alpha,
            training: self.training.train_config(0, 0.0, 0),
            jobs: self.jobs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    pub loss: LossConfig,
    pub training: TrainingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posthoc: Option<PosthocConfig>,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CaeError::config(path, format!("must be a positive number, got {v}")))
    }
}

impl TrainingConfig {
    fn validate(&self, prefix: &str) -> Result<()> {
        positive(&format!("{prefix}.tolerance"), self.tolerance)?;
        positive(&format!("{prefix}.learning_rate"), self.learning_rate)?;
        if self.epochs_max == 0 {
            return Err(CaeError::config(format!("{prefix}.epochs_max"), "must be positive"));
        }
        if self.plateau_patience == 0 {
            return Err(CaeError::config(format!("{prefix}.plateau_patience"), "must be positive"));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    /// Checks everything that can be checked before data exists.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.generator == GeneratorKind::File {
            if d.path.is_none() {
                return Err(CaeError::config("dataset.path", "required for file data"));
            }
        } else if d.points == 0 {
            return Err(CaeError::config("dataset.points", "must be positive"));
        }
        if !(d.sigma >= 0.0 && d.sigma.is_finite()) {
            return Err(CaeError::config("dataset.sigma", "must be >= 0"));
        }
        if let Some(f) = d.train_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(CaeError::config("dataset.train_fraction", "must lie strictly between 0 and 1"));
            }
        }
        if d.embed_dim == Some(0) {
            return Err(CaeError::config("dataset.embed_dim", "must be positive"));
        }
        self.architecture.architecture().validate()?;
        if self.architecture.latent == Some(0) {
            return Err(CaeError::config("architecture.latent", "must be positive"));
        }
        let l = &self.loss;
        if !(l.alpha >= 0.0 && l.alpha.is_finite()) {
            return Err(CaeError::config("loss.alpha", "must be >= 0"));
        }
        match (l.gradient_space, &l.frames) {
            (GradientSpaceKind::TangentProjected, None) => {
                return Err(CaeError::config("loss.frames", "required for tangent-projected gradients"));
            }
            (GradientSpaceKind::TangentProjected, Some(f)) if f.dimension == 0 => {
                return Err(CaeError::config("loss.frames.dimension", "tangent frames must be at least one-dimensional"));
            }
            _ => {}
        }
        if let Some(s) = &l.supervised {
            if !(s.weight >= 0.0) {
                return Err(CaeError::config("loss.supervised.weight", "must be >= 0"));
            }
        }
        self.training.validate("training")?;
        if let Some(p) = &self.posthoc {
            if !(p.alpha >= 0.0) {
                return Err(CaeError::config("posthoc.alpha", "must be >= 0"));
            }
            p.training.validate("posthoc.training")?;
        }
        if let Some(ls) = &self.outputs.level_sets {
            if ls.points == 0 || ls.levels == 0 {
                return Err(CaeError::config("outputs.level_sets", "points and levels must be positive"));
            }
        }
        if let Some(s) = &self.sweep {
            s.training.validate("sweep.training")?;
            s.spec().keys()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CaeError::config("<root>", e.to_string()))
    }

    fn to_value(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| CaeError::config("<root>", e.to_string()))
    }

    /// Deserializes a full document, reporting the failing field path.
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            CaeError::config(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves a configuration from an optional preset, an optional TOML
    /// document and `key.path=value` overrides, in that order. A document
    /// may name its own base with a top-level `preset` key.
    pub fn resolve(preset: Option<&str>, document: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut doc = match document {
            Some(text) => text
                .parse::<toml::Table>()
                .map_err(|e| CaeError::config("<document>", e.to_string()))?,
            None => toml::Table::new(),
        };
        let named = match doc.remove("preset") {
            Some(toml::Value::String(s)) => Some(s),
            Some(_) => return Err(CaeError::config("preset", "must be a string")),
            None => None,
        };
        let base_name = preset.map(str::to_string).or(named);
        let mut table = match base_name {
            Some(name) => super::presets::preset(&name)?.to_value()?,
            None => toml::Table::new(),
        };
        merge(&mut table, doc);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn load(path: impl AsRef<Path>, preset: Option<&str>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CaeError::io(path, e))?;
        Self::resolve(preset, Some(&text), overrides)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `a.b.c=value`; the value is parsed as TOML, falling back to a string.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CaeError::config(item, "override must look like key.path=value"))?;
    let key = key.trim();
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CaeError::config(key, "empty key segment"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(CaeError::config(key, format!("`{p}` is not a table"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for name in super::super::presets::PRESET_NAMES {
            let mut cfg = super::super::presets::preset(name).unwrap();
            if cfg.dataset.generator == GeneratorKind::File {
                assert!(matches!(
                    ExperimentConfig::resolve(Some(name), None, &[]),
                    Err(CaeError::Config { ref path, .. }) if path == "dataset.path"
                ));
                cfg.dataset.path = Some("modes.csv".into());
            }
            let text = cfg.to_toml().unwrap();
            let back = ExperimentConfig::resolve(None, Some(&text), &[]).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
    }

    #[test]
    fn invalid_activation_names_the_field() {
        let err = ExperimentConfig::resolve(
            Some("toy"),
            None,
            &["architecture.activations=[\"tanh\", \"relu\", \"tanh\", \"tanh\", \"tanh\"]".into()],
        )
        .unwrap_err();
        match err {
            CaeError::Config { path, .. } => assert_eq!(path, "architecture.activations[1]"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn overrides_and_documents_layer() {
        let doc = "preset = \"circle\"\nseed = 9\n[training]\nlearning_rate = 0.01\n";
        let cfg = ExperimentConfig::resolve(None, Some(doc), &["training.batch_size=5".into()]).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.training.learning_rate, 0.01);
        assert_eq!(cfg.training.batch_size, 5);
        assert_eq!(cfg.dataset.generator, GeneratorKind::Circle);
    }

    #[test]
    fn missing_fields_are_reported() {
        let err = ExperimentConfig::resolve(None, Some("name = \"x\"\nseed = 1\n"), &[]).unwrap_err();
        assert!(matches!(err, CaeError::Config { .. }), "{err:?}");
        let err = ExperimentConfig::resolve(Some("toy"), None, &["dataset.points=0".into()]).unwrap_err();
        match err {
            CaeError::Config { path, .. } => assert_eq!(path, "dataset.points"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn unknown_presets_fail() {
        assert!(ExperimentConfig::resolve(Some("moebius"), None, &[]).is_err());
    }

    #[test]
    fn override_values_parse_as_toml() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "a.b=3").unwrap();
        apply_override(&mut t, "a.c=tanh").unwrap();
        assert_eq!(t["a"]["b"].as_integer(), Some(3));
        assert_eq!(t["a"]["c"].as_str(), Some("tanh"));
        assert!(apply_override(&mut t, "novalue").is_err());
    }
}

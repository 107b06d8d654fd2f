use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CaeError, Result};
use crate::geometry::{project_to_tangent, TangentFrameSet};
use crate::nn::dot;
use crate::training::{mean_gradient_norms, CaeModel, GradientSpace, TrainingTrace};

/// Default collapse threshold relative to the largest component norm.
pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub grad_norms: Vec<f64>,
    pub active: Vec<usize>,
    pub collapsed: Vec<usize>,
    pub inferred_dimension: usize,
    pub collapse_threshold: f64,
    /// Mean of each latent component over the training set.
    pub latent_means: Vec<f64>,
}

impl DimensionReport {
    /// Component `i` collapses when `norms[i] < rel_threshold * max(norms)`.
    pub fn from_norms(norms: &[f64], latent_means: Vec<f64>, rel_threshold: f64) -> Result<Self> {
        if norms.is_empty() {
            return Err(CaeError::Argument("no gradient norms to classify".into()));
        }
        if norms.iter().any(|v| !v.is_finite()) {
            return Err(CaeError::Argument("gradient norms must be finite".into()));
        }
        let max = norms.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(CaeError::DegenerateModel);
        }
        let (active, collapsed): (Vec<usize>, Vec<usize>) =
            (0..norms.len()).partition(|&i| norms[i] >= rel_threshold * max);
        Ok(Self {
            grad_norms: norms.to_vec(),
            inferred_dimension: active.len(),
            active,
            collapsed,
            collapse_threshold: rel_threshold,
            latent_means,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| CaeError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CaeError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Classifies latent components from the final gradient norms of a run.
pub fn classify_components(trace: &TrainingTrace, rel_threshold: f64) -> Result<DimensionReport> {
    let norms = trace
        .final_grad_norms()
        .ok_or_else(|| CaeError::Argument("training trace is empty".into()))?;
    let means = trace
        .final_eval
        .as_ref()
        .map(|f| f.latent_means.clone())
        .unwrap_or_default();
    DimensionReport::from_norms(norms, means, rel_threshold)
}

/// Latent means of `model` over `data`.
pub fn latent_means(model: &CaeModel, data: &Dataset) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; model.latent_width()];
    for x in data.points() {
        for (s, v) in sums.iter_mut().zip(model.encode(x)?) {
            *s += v;
        }
    }
    Ok(sums.into_iter().map(|s| s / data.len() as f64).collect())
}

/// Decodes `x` with the listed latents replaced by `values`.
pub fn frozen_reconstruction(model: &CaeModel, x: &[f64], frozen: &[usize], values: &[f64]) -> Result<Vec<f64>> {
    let mut nu = model.encode(x)?;
    for &j in frozen {
        nu[j] = values[j];
    }
    model.decode(&nu)
}

fn frozen_error(model: &CaeModel, data: &Dataset, frozen: &[usize], values: &[f64]) -> Result<f64> {
    if data.dim() != model.ambient() {
        return Err(CaeError::Shape(format!(
            "data has dimension {} but the model expects {}",
            data.dim(),
            model.ambient()
        )));
    }
    if frozen.iter().any(|&j| j >= values.len()) {
        return Err(CaeError::Argument("no training mean for a frozen component".into()));
    }
    let mut total = 0.0;
    for x in data.points() {
        let xhat = frozen_reconstruction(model, x, frozen, values)?;
        total += x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

/// Mean squared reconstruction error on `data` with the collapsed
/// components of `report` held at their training means.
pub fn freeze_and_reconstruct(model: &CaeModel, data: &Dataset, report: &DimensionReport) -> Result<f64> {
    if report.grad_norms.len() != model.latent_width() {
        return Err(CaeError::Shape("report and model latent widths differ".into()));
    }
    frozen_error(model, data, &report.collapsed, &report.latent_means)
}

/// Latent indices ordered by decreasing norm, ties to the lower index.
pub fn rank_components(norms: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopKComparison {
    pub full_error: f64,
    pub topk_error: f64,
    /// Components kept, best first.
    pub kept: Vec<usize>,
}

/// Reconstruction error with every latent free versus with all but the
/// `k` largest-gradient components held at their means over `data`.
pub fn topk_comparison(model: &CaeModel, data: &Dataset, k: usize) -> Result<TopKComparison> {
    let l = model.latent_width();
    if k > l {
        return Err(CaeError::Argument(format!("k = {k} exceeds the latent width {l}")));
    }
    let norms = mean_gradient_norms(model, data, &GradientSpace::Ambient)?;
    let means = latent_means(model, data)?;
    let order = rank_components(&norms);
    let frozen: Vec<usize> = order[k..].to_vec();
    Ok(TopKComparison {
        full_error: frozen_error(model, data, &[], &means)?,
        topk_error: frozen_error(model, data, &frozen, &means)?,
        kept: order[..k].to_vec(),
    })
}

fn abs_cos(a: &[f64], b: &[f64]) -> f64 {
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (dot(a, b) / denom).abs()
    }
}

/// Mean over points of `|cos|` between decoder Jacobian columns `a` and `b`
/// at `nu = e(x)`.
pub fn decoder_column_cosine(model: &CaeModel, data: &Dataset, a: usize, b: usize) -> Result<f64> {
    let mut total = 0.0;
    for x in data.points() {
        let nu = model.encode(x)?;
        let jac = model.decoder.forward_jacobian(&nu)?;
        total += abs_cos(&jac.column(a), &jac.column(b));
    }
    Ok(total / data.len() as f64)
}

/// Mean over points of `|cos|` between the encoder gradients of latents `a`
/// and `b`, after projection onto the given tangent frames.
pub fn tangent_gradient_cosine(
    model: &CaeModel,
    data: &Dataset,
    frames: &TangentFrameSet,
    a: usize,
    b: usize,
) -> Result<f64> {
    if frames.len() != data.len() {
        return Err(CaeError::Argument("one tangent frame per point is required".into()));
    }
    let mut total = 0.0;
    for (i, x) in data.points().enumerate() {
        let jac = model.encoder.forward_jacobian(x)?;
        let basis = &frames.frame(i).basis;
        total += abs_cos(&project_to_tangent(jac.row(a), basis), &project_to_tangent(jac.row(b), basis));
    }
    Ok(total / data.len() as f64)
}

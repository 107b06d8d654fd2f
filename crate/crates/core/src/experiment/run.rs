//! The generate, frames, train, diagnose and evaluate pipeline.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::*;
use crate::data::io::format_f64;
use crate::data::{
    add_gaussian_noise, circle_point, embed_unitary, gen_circle, gen_hypersurface3, gen_s_curve,
    gen_swiss_roll, gen_toy_scaled, load_dataset, normalize_unit_cube, save_dataset, split, Dataset,
};
use crate::diagnostics::{
    classify_components, decoder_column_cosine, freeze_and_reconstruct, latent_means, robustness_sweep,
    save_sweep_csv, DimensionReport, RobustnessCell, DEFAULT_COLLAPSE_THRESHOLD,
};
use crate::error::{CaeError, Result};
use crate::geometry::tangent_frames;
use crate::training::{
    mean_gradient_norms, orthogonalize_posthoc_pairs, train_with_loss, CaeModel, GradientSpace, LossBreakdown,
    LossSpec, PairSet, StopReason, Supervised, TrainingTrace,
};

const TEST_SEED_OFFSET: u64 = 1;
const NOISE_SEED_OFFSET: u64 = 2;
const EMBED_SEED_OFFSET: u64 = 3;
const SPLIT_SEED_OFFSET: u64 = 4;

#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

fn generate_raw(d: &DatasetConfig, n: usize, seed: u64) -> Result<Dataset> {
    let data = match d.generator {
        GeneratorKind::Circle => gen_circle(n, seed)?,
        GeneratorKind::SCurve => gen_s_curve(n, seed)?,
        GeneratorKind::SwissRoll => gen_swiss_roll(n, seed)?,
        GeneratorKind::Hypersurface => gen_hypersurface3(n, seed)?,
        GeneratorKind::Toy | GeneratorKind::File => unreachable!("handled by the caller"),
    };
    if d.sigma > 0.0 {
        add_gaussian_noise(&data, d.sigma, seed.wrapping_add(NOISE_SEED_OFFSET))
    } else {
        Ok(data)
    }
}

fn rescale(data: &Dataset, like: &Dataset) -> Result<Dataset> {
    let Some(record) = like.meta.normalization.as_ref() else {
        return Ok(data.clone());
    };
    let pts: Vec<f64> = data.points().flat_map(|p| record.apply(p)).collect();
    let mut out = data.map_points(data.dim(), pts)?;
    out.meta.normalization = Some(record.clone());
    Ok(out)
}

/// Training and optional test sets described by the dataset block.
pub fn build_datasets(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let d = &cfg.dataset;
    let seed = cfg.seed;
    let test_seed = seed.wrapping_add(TEST_SEED_OFFSET);
    let mut full = match d.generator {
        GeneratorKind::Toy => gen_toy_scaled(d.points, seed, d.sigma, d.noise_stage, None)?,
        GeneratorKind::File => {
            let path = d.path.as_ref().ok_or_else(|| CaeError::config("dataset.path", "required for file data"))?;
            load_dataset(path)?
        }
        _ => generate_raw(d, d.points, seed)?,
    };
    if d.normalize {
        let (scaled, record) = normalize_unit_cube(&full)?;
        full = scaled;
        full.meta.normalization = Some(record);
    }
    let (mut train, mut test) = match d.train_fraction {
        Some(f) => {
            let (a, b) = split(&full, f, seed.wrapping_add(SPLIT_SEED_OFFSET))?;
            (a, Some(b))
        }
        None if d.test_points > 0 => {
            let fresh = match d.generator {
                GeneratorKind::Toy => gen_toy_scaled(
                    d.test_points,
                    test_seed,
                    d.sigma,
                    d.noise_stage,
                    full.meta.normalization.as_ref(),
                )?,
                GeneratorKind::File => {
                    return Err(CaeError::config("dataset.test_points", "file data is split with train_fraction"))
                }
                _ => rescale(&generate_raw(d, d.test_points, test_seed)?, &full)?,
            };
            (full, Some(fresh))
        }
        None => (full, None),
    };
    if let Some(n) = d.embed_dim {
        let embed_seed = seed.wrapping_add(EMBED_SEED_OFFSET);
        if n < train.dim() {
            return Err(CaeError::config(
                "dataset.embed_dim",
                format!("cannot embed {}-dimensional data into R^{n}", train.dim()),
            ));
        }
        train = embed_unitary(&train, n, embed_seed)?;
        test = test.map(|t| embed_unitary(&t, n, embed_seed)).transpose()?;
    }
    Ok(ExperimentData { train, test })
}

/// Latent width of the run; defaults to the ambient dimension.
pub fn latent_width(cfg: &ExperimentConfig, ambient: usize) -> usize {
    cfg.architecture.latent.unwrap_or(ambient)
}

/// Loss specification for `train`, computing tangent frames when needed.
pub fn build_loss(cfg: &ExperimentConfig, train: &Dataset) -> Result<LossSpec> {
    let l = &cfg.loss;
    let gradient_space = match l.gradient_space {
        GradientSpaceKind::Ambient => GradientSpace::Ambient,
        GradientSpaceKind::DecoderJacobian => GradientSpace::DecoderJacobian,
        GradientSpaceKind::TangentProjected => {
            let f = l
                .frames
                .as_ref()
                .ok_or_else(|| CaeError::config("loss.frames", "required for tangent-projected gradients"))?;
            GradientSpace::TangentProjected(tangent_frames(train, f.neighborhood, f.dimension)?)
        }
    };
    let supervised = match &l.supervised {
        None => None,
        Some(s) => {
            let label = train.label_index(&s.label).ok_or_else(|| {
                CaeError::config(
                    "loss.supervised.label",
                    format!("dataset has no label column `{}` (have {:?})", s.label, train.label_names()),
                )
            })?;
            Some(Supervised {
                latent: s.latent,
                label,
                weight: s.weight,
            })
        }
    };
    let pairs = match &l.pairs {
        None => PairSet::All,
        Some(p) => PairSet::Explicit(p.iter().map(|&[a, b]| (a, b)).collect()),
    };
    Ok(LossSpec {
        alpha: l.alpha,
        ortho_mode: l.ortho_mode,
        gradient_space,
        supervised,
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocMetrics {
    pub pairs: Vec<[usize; 2]>,
    pub cosine_before: f64,
    pub cosine_after: f64,
    pub reconstruction_before: f64,
    pub reconstruction_after: f64,
    pub epochs: usize,
    pub stop_reason: Option<StopReason>,
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub seed: u64,
    pub ambient: usize,
    pub latent: usize,
    pub train_points: usize,
    pub test_points: usize,
    pub epochs: usize,
    pub stop_reason: Option<StopReason>,
    pub train_loss: LossBreakdown,
    pub inferred_dimension: usize,
    pub active: Vec<usize>,
    pub collapsed: Vec<usize>,
    /// Training error with collapsed latents at their training means.
    pub train_frozen_error: f64,
    pub test_reconstruction_error: Option<f64>,
    pub test_frozen_error: Option<f64>,
    pub posthoc: Option<PosthocMetrics>,
    pub dense_max_error: Option<f64>,
    /// Why level sets were not written, when requested but unavailable.
    pub level_sets_skipped: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub metrics: RunMetrics,
    pub model: CaeModel,
    pub report: DimensionReport,
    pub trace: TrainingTrace,
    pub data: ExperimentData,
    /// Model after post-hoc orthogonalization, when configured.
    pub posthoc_model: Option<CaeModel>,
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| CaeError::io(path, e))
}

fn header(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|j| format!("{prefix}_{j}")).collect()
}

fn csv_line(values: impl IntoIterator<Item = String>) -> String {
    let mut line = values.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

/// Mean squared reconstruction error with every latent free.
pub fn reconstruction_error(model: &CaeModel, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for x in data.points() {
        let r = model.reconstruct(x)?;
        total += x.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

/// Encoded latents of every point.
pub fn encode_all(model: &CaeModel, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    data.points().map(|x| model.encode(x)).collect()
}

/// `nu_1..nu_l` followed by the dataset's label columns.
pub fn latents_csv(latents: &[Vec<f64>], data: &Dataset) -> String {
    let width = latents.first().map_or(0, Vec::len);
    let mut cols = header("nu", width);
    cols.extend(data.label_names().iter().cloned());
    let mut out = csv_line(cols);
    for (i, nu) in latents.iter().enumerate() {
        out.push_str(&csv_line(
            nu.iter().chain(data.labels_of(i)).map(|&v| format_f64(v)),
        ));
    }
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sample_range(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count).map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64).collect()
}

fn column_range(latents: &[Vec<f64>], j: usize) -> (f64, f64) {
    latents
        .iter()
        .map(|nu| nu[j])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// One decoded curve of the chart.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCurve {
    /// Active component varied along the curve.
    pub varied: usize,
    /// Active component held fixed.
    pub held: usize,
    pub level: usize,
    pub held_value: f64,
    pub latents: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
}

/// Decoded level sets of a two-dimensional chart. Each active component is
/// swept over its training range in `grid.points` steps while the other is
/// held at the quantiles `(i + 0.5) / levels` of its training values and the
/// collapsed components stay at their training means.
pub fn level_set_export(
    model: &CaeModel,
    report: &DimensionReport,
    train_latents: &[Vec<f64>],
    grid: &LevelSetConfig,
) -> Result<Vec<LevelCurve>> {
    if report.inferred_dimension != 2 {
        return Err(CaeError::UnsupportedVisualization(format!(
            "level sets need a two-dimensional chart, inferred dimension is {}",
            report.inferred_dimension
        )));
    }
    if grid.points == 0 || grid.levels == 0 {
        return Err(CaeError::Argument("level-set grid must be nonempty".into()));
    }
    if train_latents.is_empty() || report.latent_means.len() != model.latent_width() {
        return Err(CaeError::Argument("training latents and means are required".into()));
    }
    let mut curves = Vec::new();
    for (varied, held) in [(report.active[0], report.active[1]), (report.active[1], report.active[0])] {
        let (lo, hi) = column_range(train_latents, varied);
        let ts = sample_range(lo, hi, grid.points);
        let mut held_values: Vec<f64> = train_latents.iter().map(|nu| nu[held]).collect();
        held_values.sort_by(f64::total_cmp);
        for level in 0..grid.levels {
            let held_value = quantile(&held_values, (level as f64 + 0.5) / grid.levels as f64);
            let mut latents = Vec::with_capacity(ts.len());
            let mut points = Vec::with_capacity(ts.len());
            for &t in &ts {
                let mut nu = report.latent_means.clone();
                nu[varied] = t;
                nu[held] = held_value;
                points.push(model.decode(&nu)?);
                latents.push(nu);
            }
            curves.push(LevelCurve {
                varied,
                held,
                level,
                held_value,
                latents,
                points,
            });
        }
    }
    Ok(curves)
}

pub fn level_sets_csv(curves: &[LevelCurve]) -> String {
    let (l, n) = curves
        .first()
        .map_or((0, 0), |c| (c.latents[0].len(), c.points[0].len()));
    let mut cols = vec!["curve".to_string(), "varied".into(), "held".into(), "level".into(), "step".into()];
    cols.extend(header("nu", l));
    cols.extend(header("x", n));
    let mut out = csv_line(cols);
    for (ci, c) in curves.iter().enumerate() {
        for (step, (nu, x)) in c.latents.iter().zip(&c.points).enumerate() {
            let ids = [ci, c.varied + 1, c.held + 1, c.level, step].map(|v| v.to_string());
            out.push_str(&csv_line(
                ids.into_iter().chain(nu.iter().chain(x).map(|&v| format_f64(v))),
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseValidation {
    /// Angle, encoded latents, decoded point and error per dense sample.
    pub theta: Vec<f64>,
    pub latents: Vec<Vec<f64>>,
    pub decoded: Vec<Vec<f64>>,
    pub errors: Vec<f64>,
    pub max_error: f64,
    /// Decodes of each active latent swept over its training range with
    /// the others at their means: `(component, latents, decoded)`.
    pub sweeps: Vec<(usize, Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

/// Encodes and decodes `points` evenly spaced samples of the unit circle and
/// decodes a manual sweep of each active latent.
pub fn circle_dense_validation(
    model: &CaeModel,
    report: &DimensionReport,
    train_latents: &[Vec<f64>],
    points: usize,
) -> Result<DenseValidation> {
    if model.ambient() != 2 {
        return Err(CaeError::Argument("dense circle validation needs a planar model".into()));
    }
    if points == 0 || train_latents.is_empty() {
        return Err(CaeError::Argument("dense validation needs points and training latents".into()));
    }
    let mut out = DenseValidation {
        theta: Vec::with_capacity(points),
        latents: Vec::with_capacity(points),
        decoded: Vec::with_capacity(points),
        errors: Vec::with_capacity(points),
        max_error: 0.0,
        sweeps: Vec::new(),
    };
    for i in 0..points {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / points as f64;
        let x = circle_point(theta);
        let nu = model.encode(&x)?;
        let xhat = model.decode(&nu)?;
        let err = ((x[0] - xhat[0]).powi(2) + (x[1] - xhat[1]).powi(2)).sqrt();
        out.max_error = out.max_error.max(err);
        out.theta.push(theta);
        out.latents.push(nu);
        out.decoded.push(xhat);
        out.errors.push(err);
    }
    for &c in &report.active {
        let (lo, hi) = column_range(train_latents, c);
        let mut lat = Vec::with_capacity(points);
        let mut dec = Vec::with_capacity(points);
        for t in sample_range(lo, hi, points) {
            let mut nu = report.latent_means.clone();
            nu[c] = t;
            dec.push(model.decode(&nu)?);
            lat.push(nu);
        }
        out.sweeps.push((c, lat, dec));
    }
    Ok(out)
}

impl DenseValidation {
    pub fn dense_csv(&self) -> String {
        let l = self.latents.first().map_or(0, Vec::len);
        let mut cols = vec!["theta".to_string(), "x_1".into(), "x_2".into()];
        cols.extend(header("nu", l));
        cols.extend(["xhat_1".to_string(), "xhat_2".into(), "error".into()]);
        let mut out = csv_line(cols);
        for i in 0..self.theta.len() {
            let x = circle_point(self.theta[i]);
            let row = std::iter::once(self.theta[i])
                .chain(x)
                .chain(self.latents[i].iter().copied())
                .chain(self.decoded[i].iter().copied())
                .chain(std::iter::once(self.errors[i]));
            out.push_str(&csv_line(row.map(format_f64)));
        }
        out
    }

    pub fn sweep_csv(&self) -> String {
        let l = self.latents.first().map_or(0, Vec::len);
        let mut cols = vec!["component".to_string(), "step".into()];
        cols.extend(header("nu", l));
        cols.extend(["xhat_1".to_string(), "xhat_2".into()]);
        let mut out = csv_line(cols);
        for (c, lat, dec) in &self.sweeps {
            for (step, (nu, x)) in lat.iter().zip(dec).enumerate() {
                let ids = [(c + 1).to_string(), step.to_string()];
                out.push_str(&csv_line(ids.into_iter().chain(nu.iter().chain(x).map(|&v| format_f64(v)))));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub points: usize,
    pub reconstruction_error: f64,
    pub frozen_error: f64,
    pub report: DimensionReport,
}

/// Reconstruction metrics of a trained model on `data`. Without a report the
/// components are classified from mean ambient gradient norms over `data`
/// and frozen at their means over `data`.
pub fn evaluate_model(model: &CaeModel, data: &Dataset, report: Option<DimensionReport>) -> Result<Evaluation> {
    if data.dim() != model.ambient() {
        return Err(CaeError::Shape(format!(
            "data has dimension {} but the model expects {}",
            data.dim(),
            model.ambient()
        )));
    }
    let report = match report {
        Some(r) => r,
        None => DimensionReport::from_norms(
            &mean_gradient_norms(model, data, &GradientSpace::Ambient)?,
            latent_means(model, data)?,
            DEFAULT_COLLAPSE_THRESHOLD,
        )?,
    };
    Ok(Evaluation {
        points: data.len(),
        reconstruction_error: reconstruction_error(model, data)?,
        frozen_error: freeze_and_reconstruct(model, data, &report)?,
        report,
    })
}

fn active_pairs(report: &DimensionReport) -> Vec<(usize, usize)> {
    let a = &report.active;
    let mut out = Vec::new();
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            out.push((a[i], a[j]));
        }
    }
    out
}

fn mean_column_cosine(model: &CaeModel, data: &Dataset, pairs: &[(usize, usize)]) -> Result<f64> {
    let mut total = 0.0;
    for &(a, b) in pairs {
        total += decoder_column_cosine(model, data, a, b)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Writes the generated training and test sets into `dir`.
pub fn generate(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentData> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| CaeError::io(dir, e))?;
    let data = build_datasets(cfg)?;
    save_dataset(&data.train, dir.join("dataset.csv"))?;
    if let Some(t) = &data.test {
        save_dataset(t, dir.join("test.csv"))?;
    }
    Ok(data)
}

/// Runs the experiment into `dir`. On failure the artifacts written so far
/// are kept and `error.json` describes the error.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(dir).map_err(|e| CaeError::io(dir, e))?;
    let result = run_inner(cfg, dir);
    if let Err(e) = &result {
        write_error(dir, e)?;
    } else {
        let stale = dir.join("error.json");
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| CaeError::io(&stale, e))?;
        }
    }
    result
}

pub fn write_error(dir: &Path, error: &CaeError) -> Result<()> {
    write(&dir.join("error.json"), serde_json::to_string_pretty(&error.to_json())?)
}

fn run_inner(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    write(&dir.join("config.toml"), cfg.to_toml()?)?;
    let data = build_datasets(cfg)?;
    let train = &data.train;
    if cfg.outputs.dataset {
        save_dataset(train, dir.join("dataset.csv"))?;
        if let Some(t) = &data.test {
            save_dataset(t, dir.join("test.csv"))?;
        }
    }
    let spec = build_loss(cfg, train)?;
    if let GradientSpace::TangentProjected(frames) = &spec.gradient_space {
        frames.save(dir.join("frames.json"))?;
    }
    let latent = latent_width(cfg, train.dim());
    let model = CaeModel::init(&cfg.architecture.architecture(), train.dim(), latent, cfg.seed)?;
    spec.validate(&model, train)?;
    let tc = cfg.training.train_config(cfg.seed, cfg.dataset.sigma, train.dim());
    let (model, trace) = match train_with_loss(train, model, &spec, &tc) {
        Ok(v) => v,
        Err(abort) => {
            abort.trace.save_csv(dir.join("trace.csv"))?;
            return Err(abort.error);
        }
    };
    trace.save_csv(dir.join("trace.csv"))?;
    if cfg.outputs.checkpoint {
        model.save(dir.join("model.json"))?;
    }
    let report = classify_components(&trace, DEFAULT_COLLAPSE_THRESHOLD)?;
    report.save(dir.join("dimension_report.json"))?;
    let train_latents = encode_all(&model, train)?;
    if cfg.outputs.latents {
        write(&dir.join("latents.csv"), latents_csv(&train_latents, train))?;
    }
    let train_loss = trace.final_loss().unwrap_or_default();
    let mut metrics = RunMetrics {
        name: cfg.name.clone(),
        seed: cfg.seed,
        ambient: train.dim(),
        latent,
        train_points: train.len(),
        test_points: data.test.as_ref().map_or(0, Dataset::len),
        epochs: trace.len(),
        stop_reason: trace.stop_reason,
        train_loss,
        inferred_dimension: report.inferred_dimension,
        active: report.active.clone(),
        collapsed: report.collapsed.clone(),
        train_frozen_error: freeze_and_reconstruct(&model, train, &report)?,
        test_reconstruction_error: None,
        test_frozen_error: None,
        posthoc: None,
        dense_max_error: None,
        level_sets_skipped: None,
    };
    if let Some(test) = &data.test {
        metrics.test_reconstruction_error = Some(reconstruction_error(&model, test)?);
        metrics.test_frozen_error = Some(freeze_and_reconstruct(&model, test, &report)?);
    }
    if let Some(grid) = &cfg.outputs.level_sets {
        match level_set_export(&model, &report, &train_latents, grid) {
            Ok(curves) => write(&dir.join("level_sets.csv"), level_sets_csv(&curves))?,
            Err(e @ CaeError::UnsupportedVisualization(_)) => metrics.level_sets_skipped = Some(e.to_string()),
            Err(e) => return Err(e),
        }
    }
    if let Some(points) = cfg.outputs.dense_validation {
        let dense = circle_dense_validation(&model, &report, &train_latents, points)?;
        write(&dir.join("dense_validation.csv"), dense.dense_csv())?;
        write(&dir.join("latent_sweep.csv"), dense.sweep_csv())?;
        metrics.dense_max_error = Some(dense.max_error);
    }
    let mut posthoc_model = None;
    if let Some(p) = &cfg.posthoc {
        let pairs = active_pairs(&report);
        if !pairs.is_empty() {
            let cosine_before = mean_column_cosine(&model, train, &pairs)?;
            let ptc = p.training.train_config(cfg.seed, cfg.dataset.sigma, train.dim());
            let (m2, t2) =
                match orthogonalize_posthoc_pairs(train, model.clone(), &ptc, p.alpha, PairSet::Explicit(pairs.clone())) {
                    Ok(v) => v,
                    Err(abort) => {
                        abort.trace.save_csv(dir.join("posthoc_trace.csv"))?;
                        return Err(abort.error);
                    }
                };
            t2.save_csv(dir.join("posthoc_trace.csv"))?;
            if cfg.outputs.checkpoint {
                m2.save(dir.join("model_posthoc.json"))?;
            }
            metrics.posthoc = Some(PosthocMetrics {
                pairs: pairs.iter().map(|&(a, b)| [a, b]).collect(),
                cosine_before,
                cosine_after: mean_column_cosine(&m2, train, &pairs)?,
                reconstruction_before: reconstruction_error(&model, train)?,
                reconstruction_after: reconstruction_error(&m2, train)?,
                epochs: t2.len(),
                stop_reason: t2.stop_reason,
            });
            posthoc_model = Some(m2);
        }
    }
    write(&dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        metrics,
        model,
        report,
        trace,
        data,
        posthoc_model,
    })
}

/// Runs the robustness grid of `cfg.sweep` on the configured base data and
/// writes `sweep.csv`. `jobs` overrides the configured worker count.
pub fn run_sweep(cfg: &ExperimentConfig, dir: &Path, jobs: Option<usize>) -> Result<Vec<RobustnessCell>> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CaeError::config("sweep", "the configuration has no sweep block"))?;
    fs::create_dir_all(dir).map_err(|e| CaeError::io(dir, e))?;
    write(&dir.join("config.toml"), cfg.to_toml()?)?;
    let mut spec = sweep.spec();
    if let Some(j) = jobs {
        spec.jobs = j;
    }
    let base = build_datasets(cfg)?.train;
    let cells = robustness_sweep(&base, &spec)?;
    save_sweep_csv(&cells, dir.join("sweep.csv"))?;
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::preset;

    fn quick(name: &str) -> ExperimentConfig {
        let mut c = preset(name).unwrap();
        c.dataset.points = 60;
        c.dataset.test_points = c.dataset.test_points.min(30);
        c.training.epochs_max = 3;
        c.training.batch_size = 16;
        if let Some(p) = &mut c.posthoc {
            p.training.epochs_max = 2;
        }
        c
    }

    #[test]
    fn toy_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&quick("toy"), dir.path()).unwrap();
        for f in ["config.toml", "trace.csv", "dimension_report.json", "latents.csv", "metrics.json", "model.json", "dataset.csv", "test.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(out.trace.len(), 3);
        assert_eq!(out.metrics.test_points, 30);
        let lat = fs::read_to_string(dir.path().join("latents.csv")).unwrap();
        assert!(lat.starts_with("nu_1,nu_2,nu_3,x,y\n"));
        assert_eq!(lat.lines().count(), 61);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = quick("circle");
        run_experiment(&cfg, a.path()).unwrap();
        run_experiment(&cfg, b.path()).unwrap();
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() >= 8);
        for n in names {
            assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap(), "{n:?}");
        }
    }

    #[test]
    fn config_echo_reproduces_the_run() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = quick("s_curve_invariance");
        run_experiment(&cfg, a.path()).unwrap();
        let echo = fs::read_to_string(a.path().join("config.toml")).unwrap();
        let again = ExperimentConfig::resolve(None, Some(&echo), &[]).unwrap();
        assert_eq!(again, cfg);
        run_experiment(&again, b.path()).unwrap();
        for n in ["trace.csv", "latents.csv", "metrics.json", "frames.json", "model.json"] {
            assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap(), "{n}");
        }
    }

    #[test]
    fn failures_leave_an_error_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick("s_curve_invariance");
        cfg.loss.supervised.as_mut().unwrap().label = "missing".into();
        let err = run_experiment(&cfg, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let j: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("error.json")).unwrap()).unwrap();
        assert_eq!(j["kind"], "config");
        assert_eq!(j["path"], "loss.supervised.label");
        assert!(dir.path().join("config.toml").exists());
    }

    fn report(active: Vec<usize>, collapsed: Vec<usize>, means: Vec<f64>) -> DimensionReport {
        DimensionReport {
            grad_norms: vec![1.0; means.len()],
            inferred_dimension: active.len(),
            active,
            collapsed,
            collapse_threshold: DEFAULT_COLLAPSE_THRESHOLD,
            latent_means: means,
        }
    }

    #[test]
    fn level_set_grid_shapes() {
        let arch = crate::training::Architecture::uniform(2, 4, crate::nn::ActivationKind::Tanh);
        let model = CaeModel::init(&arch, 3, 3, 0).unwrap();
        let lat: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, -(i as f64), 0.5]).collect();
        let r = report(vec![0, 1], vec![2], vec![9.5, -9.5, 0.5]);
        let curves = level_set_export(&model, &r, &lat, &LevelSetConfig { points: 7, levels: 3 }).unwrap();
        assert_eq!(curves.len(), 6);
        assert!(curves.iter().all(|c| c.points.len() == 7 && c.latents.iter().all(|nu| nu[2] == 0.5)));
        assert_eq!(curves[0].latents[0][0], 0.0);
        assert_eq!(curves[0].latents[6][0], 19.0);
        let one = level_set_export(&model, &r, &lat, &LevelSetConfig { points: 1, levels: 1 }).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one[0].latents, vec![vec![9.5, -9.5, 0.5]]);
        assert_eq!(level_sets_csv(&curves).lines().count(), 43);
        let three = report(vec![0, 1, 2], vec![], vec![0.0; 3]);
        assert!(matches!(
            level_set_export(&model, &three, &lat, &LevelSetConfig { points: 2, levels: 2 }),
            Err(CaeError::UnsupportedVisualization(_))
        ));
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile(&v, 0.5), 1.5);
        assert_eq!(quantile(&v, 0.0), 0.0);
        assert_eq!(quantile(&v, 1.0), 3.0);
    }

    #[test]
    fn file_data_is_normalized_then_split() {
        let dir = tempfile::tempdir().unwrap();
        let src = crate::data::gen_hypersurface3(50, 3).unwrap();
        let path = dir.path().join("modes.csv");
        crate::data::save_csv(&src, &path).unwrap();
        let mut cfg = preset("ks").unwrap();
        cfg.dataset.path = Some(path);
        let d = build_datasets(&cfg).unwrap();
        assert_eq!(d.train.len(), 25);
        assert_eq!(d.test.as_ref().unwrap().len(), 25);
        let all: Vec<f64> = d.train.raw_points().iter().chain(d.test.unwrap().raw_points()).copied().collect();
        assert!(all.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn single_cell_sweep_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = preset("robustness").unwrap();
        cfg.dataset.points = 40;
        let s = cfg.sweep.as_mut().unwrap();
        s.dims = vec![3];
        s.levels = vec![0.01];
        s.seeds = vec![0];
        s.training.epochs_max = 2;
        let cells = run_sweep(&cfg, dir.path(), Some(1)).unwrap();
        assert_eq!(cells.len(), 1);
        let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }
}

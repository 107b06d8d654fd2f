use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{CaeGrad, Evaluator, GradientSpace, LossBreakdown, LossSpec, PairSet};
use super::model::CaeModel;
use super::trace::{EpochRecord, FinalEval, StopReason, TrainingTrace};
use crate::data::Dataset;
use crate::error::{CaeError, Result};
use crate::geometry::{OrthoMode, TangentFrameSet};
use crate::nn::{adam_step, AdamConfig, AdamState};

/// Relative improvement below which the best loss counts as unchanged.
pub const PLATEAU_MARGIN: f64 = 1e-6;

/// Which loss level ends training early.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StopMode {
    /// Stop once the total loss is below `tolerance`.
    #[default]
    Tolerance,
    /// Stop once the reconstruction loss is at most
    /// [`robustness_threshold`]`(sigma, ambient)`.
    Robustness { sigma: f64, ambient: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub tolerance: f64,
    pub plateau_patience: usize,
    pub learning_rate: f64,
    /// Points per Adam step; 0 means the full dataset.
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub stop_mode: StopMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 5000,
            tolerance: 1e-4,
            plateau_patience: 1500,
            learning_rate: 1e-3,
            batch_size: 0,
            seed: 0,
            stop_mode: StopMode::Tolerance,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(CaeError::config("training.tolerance", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CaeError::config("training.learning_rate", "must be positive"));
        }
        if self.epochs_max == 0 {
            return Err(CaeError::config("training.epochs_max", "must be positive"));
        }
        if self.plateau_patience == 0 {
            return Err(CaeError::config("training.plateau_patience", "must be positive"));
        }
        Ok(())
    }
}

/// Noise-aware reconstruction target `max(5e-4, sigma^2 sqrt(n / 3) / 10)`.
pub fn robustness_threshold(sigma: f64, ambient: usize) -> f64 {
    (sigma * sigma * (ambient as f64 / 3.0).sqrt() / 10.0).max(5e-4)
}

/// The rule that ends training after the latest epoch, if any.
pub fn stop(trace: &TrainingTrace, cfg: &TrainConfig) -> Option<StopReason> {
    let last = trace.last()?;
    let loss = &last.loss;
    if !loss.is_finite() {
        return Some(StopReason::NonFinite);
    }
    match cfg.stop_mode {
        StopMode::Tolerance if loss.total < cfg.tolerance => return Some(StopReason::Tolerance),
        StopMode::Robustness { sigma, ambient }
            if loss.reconstruction <= robustness_threshold(sigma, ambient) =>
        {
            return Some(StopReason::Threshold)
        }
        _ => {}
    }
    if last.epoch.saturating_sub(trace.best_epoch) >= cfg.plateau_patience {
        return Some(StopReason::Plateau);
    }
    if last.epoch >= cfg.epochs_max {
        return Some(StopReason::MaxEpochs);
    }
    None
}

/// Appends an epoch and updates the best-loss bookkeeping.
pub fn record_epoch(trace: &mut TrainingTrace, loss: LossBreakdown, grad_norms: Vec<f64>) {
    let epoch = trace.epochs.len() + 1;
    let prev_best = trace.last().map(|e| e.best_total).unwrap_or(f64::INFINITY);
    if trace.epochs.is_empty() || loss.total < prev_best * (1.0 - PLATEAU_MARGIN) {
        trace.best_epoch = epoch;
    }
    trace.epochs.push(EpochRecord {
        epoch,
        loss,
        best_total: prev_best.min(loss.total),
        grad_norms,
    });
}

/// A training run that hit a non-finite value. Holds the trace up to the
/// failure and the last parameters that produced finite values.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: CaeError,
    pub trace: TrainingTrace,
    pub model: CaeModel,
}

impl fmt::Display for TrainAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training aborted after {} epochs: {}", self.trace.len(), self.error)
    }
}

impl std::error::Error for TrainAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<TrainAbort> for CaeError {
    fn from(a: TrainAbort) -> Self {
        a.error
    }
}

pub type TrainResult = std::result::Result<(CaeModel, TrainingTrace), TrainAbort>;

/// Evaluates the loss, gradient norms and latent means of `model` on all of `data`.
pub fn evaluate_full(model: &CaeModel, data: &Dataset, spec: &LossSpec) -> Result<FinalEval> {
    let mut ev = Evaluator::new(model, data, spec)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let out = ev.run(model, data, &idx, None, 0)?;
    let count = out.count as f64;
    Ok(FinalEval {
        loss: out.loss,
        grad_norms: out.grad_norm_sums.iter().map(|s| s / count).collect(),
        latent_means: out.latent_sums.iter().map(|s| s / count).collect(),
    })
}

/// Adam on `spec` until [`stop`] fires. No precondition on the latent width.
pub fn train_with_loss(data: &Dataset, model: CaeModel, spec: &LossSpec, cfg: &TrainConfig) -> TrainResult {
    let mut trace = TrainingTrace::new(model.latent_width());
    let abort = |error, trace, model| TrainAbort { error, trace, model };
    if let Err(e) = cfg.validate() {
        return Err(abort(e, trace, model));
    }
    let mut ev = match Evaluator::new(&model, data, spec) {
        Ok(ev) => ev,
        Err(e) => return Err(abort(e, trace, model)),
    };

    let hyper = AdamConfig::with_learning_rate(cfg.learning_rate);
    let mut enc_state = AdamState::new(&model.encoder, hyper);
    let mut dec_state = AdamState::new(&model.decoder, hyper);
    let mut grads = CaeGrad::zeros_like(&model);
    let mut model = model;

    let n = data.len();
    let batch = if cfg.batch_size == 0 || cfg.batch_size >= n {
        n
    } else {
        cfg.batch_size
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4);
    let l = model.latent_width();

    loop {
        let epoch = trace.len() + 1;
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut sums = LossBreakdown::default();
        let mut norm_sums = vec![0.0; l];
        let last_good = model.clone();
        for chunk in order.chunks(batch) {
            grads.encoder.fill_zero();
            grads.decoder.fill_zero();
            let out = match ev.run(&model, data, chunk, Some(&mut grads), epoch) {
                Ok(out) => out,
                Err(e) => {
                    trace.stop_reason = Some(StopReason::NonFinite);
                    return Err(abort(e, trace, last_good));
                }
            };
            let w = out.count as f64;
            sums.total += out.loss.total * w;
            sums.reconstruction += out.loss.reconstruction * w;
            sums.orthogonality += out.loss.orthogonality * w;
            sums.supervised += out.loss.supervised * w;
            norm_sums.iter_mut().zip(&out.grad_norm_sums).for_each(|(a, b)| *a += b);

            let step = adam_step(&mut model.encoder, &grads.encoder, &mut enc_state)
                .and_then(|_| adam_step(&mut model.decoder, &grads.decoder, &mut dec_state));
            if let Err(e) = step {
                return Err(abort(e, trace, last_good));
            }
        }
        let count = n as f64;
        let loss = LossBreakdown {
            total: sums.total / count,
            reconstruction: sums.reconstruction / count,
            orthogonality: sums.orthogonality / count,
            supervised: sums.supervised / count,
        };
        record_epoch(&mut trace, loss, norm_sums.iter().map(|s| s / count).collect());
        if let Some(reason) = stop(&trace, cfg) {
            trace.stop_reason = Some(reason);
            break;
        }
    }

    match evaluate_full(&model, data, spec) {
        Ok(fe) => trace.final_eval = Some(fe),
        Err(e) => {
            trace.stop_reason = Some(StopReason::NonFinite);
            return Err(abort(e, trace, model));
        }
    }
    Ok((model, trace))
}

/// Reconstruction plus orthogonality of ambient encoder gradients, with a
/// latent layer as wide as the data.
pub fn train_cae(data: &Dataset, model: CaeModel, spec: &LossSpec, cfg: &TrainConfig) -> TrainResult {
    if model.latent_width() != data.dim() {
        let e = CaeError::config(
            "architecture.latent",
            format!("latent width {} must equal the ambient dimension {}", model.latent_width(), data.dim()),
        );
        return Err(TrainAbort {
            error: e,
            trace: TrainingTrace::new(model.latent_width()),
            model,
        });
    }
    if spec.gradient_space != GradientSpace::Ambient {
        return Err(TrainAbort {
            error: CaeError::config("loss.gradient_space", "train_cae compares ambient gradients"),
            trace: TrainingTrace::new(model.latent_width()),
            model,
        });
    }
    train_with_loss(data, model, spec, cfg)
}

/// As [`train_cae`] but the encoder gradients are projected onto the given
/// tangent frames before the orthogonality term.
pub fn train_cae_projected(
    data: &Dataset,
    model: CaeModel,
    frames: &TangentFrameSet,
    spec: &LossSpec,
    cfg: &TrainConfig,
) -> TrainResult {
    let spec = LossSpec {
        gradient_space: GradientSpace::TangentProjected(frames.clone()),
        ..spec.clone()
    };
    train_with_loss(data, model, &spec, cfg)
}

/// Continues training a chart with the orthogonality term moved onto the
/// decoder Jacobian columns.
pub fn orthogonalize_posthoc(data: &Dataset, model: CaeModel, cfg: &TrainConfig, alpha: f64) -> TrainResult {
    orthogonalize_posthoc_pairs(data, model, cfg, alpha, PairSet::All)
}

/// As [`orthogonalize_posthoc`], penalizing only the listed column pairs
/// (typically those between active components).
pub fn orthogonalize_posthoc_pairs(
    data: &Dataset,
    model: CaeModel,
    cfg: &TrainConfig,
    alpha: f64,
    pairs: PairSet,
) -> TrainResult {
    let spec = LossSpec {
        alpha,
        ortho_mode: OrthoMode::L2,
        gradient_space: GradientSpace::DecoderJacobian,
        pairs,
        ..LossSpec::default()
    };
    train_with_loss(data, model, &spec, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_toy;
    use crate::nn::ActivationKind;
    use crate::training::Architecture;

    fn loss(total: f64) -> LossBreakdown {
        LossBreakdown {
            total,
            reconstruction: total,
            ..LossBreakdown::default()
        }
    }

    #[test]
    fn threshold_formula() {
        let t = robustness_threshold(0.55, 100);
        let expect = 0.3025 * (100.0f64 / 3.0).sqrt() / 10.0;
        assert!((t - expect).abs() < 1e-15);
        assert!((t - 0.17465).abs() < 1e-4);
        assert_eq!(robustness_threshold(0.0, 7), 5e-4);
    }

    #[test]
    fn plateau_fires_after_patience() {
        let cfg = TrainConfig {
            plateau_patience: 1500,
            epochs_max: 100_000,
            tolerance: 1e-9,
            ..TrainConfig::default()
        };
        let mut trace = TrainingTrace::new(1);
        for _ in 0..1500 {
            record_epoch(&mut trace, loss(1.0), vec![1.0]);
            assert_eq!(stop(&trace, &cfg), None);
        }
        record_epoch(&mut trace, loss(1.0), vec![1.0]);
        assert_eq!(stop(&trace, &cfg), Some(StopReason::Plateau));
    }

    #[test]
    fn best_total_is_monotone() {
        let mut trace = TrainingTrace::new(1);
        for v in [3.0, 1.0, 2.0, 0.5, 0.7] {
            record_epoch(&mut trace, loss(v), vec![0.0]);
        }
        let best: Vec<f64> = trace.epochs.iter().map(|e| e.best_total).collect();
        assert_eq!(best, vec![3.0, 1.0, 1.0, 0.5, 0.5]);
        assert_eq!(trace.best_epoch, 4);
    }

    #[test]
    fn stop_modes() {
        let cfg = TrainConfig {
            tolerance: 1e-3,
            ..TrainConfig::default()
        };
        let mut trace = TrainingTrace::new(1);
        record_epoch(&mut trace, loss(5e-4), vec![0.0]);
        assert_eq!(stop(&trace, &cfg), Some(StopReason::Tolerance));
        let robust = TrainConfig {
            stop_mode: StopMode::Robustness { sigma: 0.0, ambient: 3 },
            ..cfg.clone()
        };
        assert_eq!(stop(&trace, &robust), Some(StopReason::Threshold));
        let mut trace = TrainingTrace::new(1);
        record_epoch(&mut trace, loss(1.0), vec![0.0]);
        let one = TrainConfig {
            epochs_max: 1,
            ..cfg
        };
        assert_eq!(stop(&trace, &one), Some(StopReason::MaxEpochs));
    }

    #[test]
    fn already_converged_model_returns_immediately() {
        let data = gen_toy(50, 0, 0.0).unwrap();
        let arch = Architecture::uniform(2, 6, ActivationKind::Tanh);
        let model = CaeModel::init(&arch, 3, 3, 1).unwrap();
        let spec = LossSpec::default();
        let cfg = TrainConfig {
            tolerance: 1e3,
            ..TrainConfig::default()
        };
        let (_, trace) = train_cae(&data, model, &spec, &cfg).unwrap();
        assert!(trace.len() <= 1);
        assert_eq!(trace.stop_reason, Some(StopReason::Tolerance));
        assert!(trace.final_eval.is_some());
    }

    #[test]
    fn training_is_deterministic_and_decreases_loss() {
        let data = gen_toy(60, 0, 0.0).unwrap();
        let arch = Architecture::uniform(3, 6, ActivationKind::Tanh);
        let model = CaeModel::init(&arch, 3, 3, 1).unwrap();
        let spec = LossSpec::default();
        let cfg = TrainConfig {
            epochs_max: 200,
            batch_size: 16,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let (m1, t1) = train_cae(&data, model.clone(), &spec, &cfg).unwrap();
        let (m2, t2) = train_cae(&data, model, &spec, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(t1, t2);
        assert_eq!(t1.len(), 200);
        assert_eq!(t1.stop_reason, Some(StopReason::MaxEpochs));
        assert!(t1.epochs[199].loss.total < t1.epochs[0].loss.total);
        for e in &t1.epochs {
            assert_eq!(e.grad_norms.len(), 3);
        }
    }

    #[test]
    fn latent_width_precondition() {
        let data = gen_toy(10, 0, 0.0).unwrap();
        let arch = Architecture::uniform(2, 4, ActivationKind::Tanh);
        let model = CaeModel::init(&arch, 3, 2, 1).unwrap();
        let err = train_cae(&data, model, &LossSpec::default(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err.error, CaeError::Config { .. }));
    }
}

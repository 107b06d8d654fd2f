//! Finite-difference oracles for input Jacobians and loss gradients.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::Result;
use crate::nn::{chain_specs, init_params, ActivationKind, MlpNetwork};
use crate::training::{loss_gradients, cae_loss, CaeModel, LossSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub step: f64,
    pub relative: f64,
    pub absolute: f64,
}

impl Tolerance {
    /// Central differences for loss gradients.
    pub const GRADIENT: Tolerance = Tolerance {
        step: 1e-6,
        relative: 1e-5,
        absolute: 1e-8,
    };
    /// Central differences for input Jacobians.
    pub const JACOBIAN: Tolerance = Tolerance {
        step: 1e-5,
        relative: 0.0,
        absolute: 1e-6,
    };

    pub fn accepts(&self, exact: f64, approx: f64) -> bool {
        let err = (exact - approx).abs();
        err <= self.absolute || err <= self.relative * exact.abs().max(approx.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub entries: usize,
    pub failures: usize,
    pub max_abs_err: f64,
    /// Index of the entry with the largest absolute error.
    pub worst: usize,
}

impl CheckResult {
    fn new() -> Self {
        Self {
            entries: 0,
            failures: 0,
            max_abs_err: 0.0,
            worst: 0,
        }
    }

    fn push(&mut self, tol: &Tolerance, exact: f64, approx: f64) {
        let err = (exact - approx).abs();
        if !(err <= self.max_abs_err) {
            self.max_abs_err = err;
            self.worst = self.entries;
        }
        if !tol.accepts(exact, approx) {
            self.failures += 1;
        }
        self.entries += 1;
    }

    fn merge(&mut self, other: &CheckResult) {
        if other.max_abs_err > self.max_abs_err {
            self.max_abs_err = other.max_abs_err;
            self.worst = self.entries + other.worst;
        }
        self.entries += other.entries;
        self.failures += other.failures;
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Compares `forward_jacobian` with central differences of `forward`.
pub fn check_jacobian(net: &MlpNetwork, x: &[f64], tol: &Tolerance) -> Result<CheckResult> {
    let bundle = net.forward_jacobian(x)?;
    let mut out = CheckResult::new();
    let mut xp = x.to_vec();
    let cols = x.len();
    let mut fd = vec![0.0; bundle.rows() * cols];
    for c in 0..cols {
        xp[c] = x[c] + tol.step;
        let plus = net.forward(&xp)?;
        xp[c] = x[c] - tol.step;
        let minus = net.forward(&xp)?;
        xp[c] = x[c];
        for r in 0..bundle.rows() {
            fd[r * cols + c] = (plus[r] - minus[r]) / (2.0 * tol.step);
        }
    }
    for (k, approx) in fd.iter().enumerate() {
        out.push(tol, bundle.jacobian[k], *approx);
    }
    Ok(out)
}

fn param_mut(model: &mut CaeModel, index: usize) -> &mut f64 {
    let enc = model.encoder.param_count();
    if index < enc {
        model.encoder.param_mut(index)
    } else {
        model.decoder.param_mut(index - enc)
    }
}

/// Compares [`loss_gradients`] on all of `data` with central differences of
/// the total loss, parameter by parameter.
pub fn check_loss_gradients(model: &CaeModel, data: &Dataset, spec: &LossSpec, tol: &Tolerance) -> Result<CheckResult> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let (_, grads) = loss_gradients(model, data, &indices, spec)?;
    let exact = grads.flatten();
    let mut probe = model.clone();
    let mut out = CheckResult::new();
    for (p, g) in exact.iter().enumerate() {
        let orig = *param_mut(&mut probe, p);
        *param_mut(&mut probe, p) = orig + tol.step;
        let plus = cae_loss(&probe, data, &indices, spec)?.total;
        *param_mut(&mut probe, p) = orig - tol.step;
        let minus = cae_loss(&probe, data, &indices, spec)?.total;
        *param_mut(&mut probe, p) = orig;
        out.push(tol, *g, (plus - minus) / (2.0 * tol.step));
    }
    Ok(out)
}

/// Random widths in `1..=max_width` and `1..=max_depth` layers.
pub fn random_network(
    rng: &mut impl Rng,
    input: usize,
    output: usize,
    max_width: usize,
    max_depth: usize,
    activation: ActivationKind,
) -> Result<MlpNetwork> {
    let depth = rng.random_range(1..=max_depth);
    let mut widths = vec![input];
    for _ in 1..depth {
        widths.push(rng.random_range(1..=max_width));
    }
    widths.push(output);
    let spec = chain_specs(&widths, &vec![activation; depth])?;
    init_params(&spec, rng.random())
}

/// A CAE with latent width equal to `ambient` and random hidden layers.
pub fn random_cae(rng: &mut impl Rng, ambient: usize, max_width: usize, max_depth: usize) -> Result<CaeModel> {
    let encoder = random_network(rng, ambient, ambient, max_width, max_depth, ActivationKind::Tanh)?;
    let decoder = random_network(rng, ambient, ambient, max_width, max_depth, ActivationKind::Tanh)?;
    CaeModel::new(encoder, decoder)
}

pub fn random_points(rng: &mut impl Rng, count: usize, dim: usize) -> Result<Dataset> {
    let pts = (0..count * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Dataset::new(pts, dim)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub models: usize,
    pub gradient: CheckResult,
    pub jacobian_draws: usize,
    pub jacobian: CheckResult,
    pub seconds: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.gradient.passed() && self.jacobian.passed()
    }
}

/// Gradient checks of the full L2 loss at `alpha` in {0, 1} on `models`
/// random small tanh CAEs (5 points each), plus Jacobian checks on
/// `jacobian_draws` random depth-3 tanh networks.
pub fn oracle_suite(models: usize, jacobian_draws: usize, seed: u64) -> Result<OracleReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gradient = CheckResult::new();
    for _ in 0..models {
        let ambient = rng.random_range(1..=4);
        let model = random_cae(&mut rng, ambient, 6, 4)?;
        let data = random_points(&mut rng, 5, ambient)?;
        for alpha in [0.0, 1.0] {
            let spec = LossSpec {
                alpha,
                ..LossSpec::default()
            };
            gradient.merge(&check_loss_gradients(&model, &data, &spec, &Tolerance::GRADIENT)?);
        }
    }
    let mut jacobian = CheckResult::new();
    for _ in 0..jacobian_draws {
        let input = rng.random_range(1..=5);
        let output = rng.random_range(1..=5);
        let w1 = rng.random_range(1..=8);
        let w2 = rng.random_range(1..=8);
        let spec = chain_specs(&[input, w1, w2, output], &[ActivationKind::Tanh; 3])?;
        let net = init_params(&spec, rng.random())?;
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
        jacobian.merge(&check_jacobian(&net, &x, &Tolerance::JACOBIAN)?);
    }
    Ok(OracleReport {
        models,
        gradient,
        jacobian_draws,
        jacobian,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_rule() {
        let t = Tolerance::GRADIENT;
        assert!(t.accepts(1.0, 1.0 + 5e-6));
        assert!(!t.accepts(1.0, 1.0 + 5e-5));
        assert!(t.accepts(0.0, 5e-9));
    }

    #[test]
    fn small_suite_passes() {
        let r = oracle_suite(3, 5, 1).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.gradient.entries > 0);
    }
}

use serde::{Deserialize, Serialize};

use super::network::{MlpNetwork, NetworkGrad};
use crate::error::{CaeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(CaeError::Argument(format!("invalid Adam hyper-parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: NetworkGrad,
    pub second_moment: NetworkGrad,
    pub step_count: u64,
    pub hyper: AdamConfig,
}

impl AdamState {
    pub fn new(net: &MlpNetwork, hyper: AdamConfig) -> Self {
        Self {
            first_moment: NetworkGrad::zeros_like(net),
            second_moment: NetworkGrad::zeros_like(net),
            step_count: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update of `net` in place.
pub fn adam_step(net: &mut MlpNetwork, grads: &NetworkGrad, state: &mut AdamState) -> Result<()> {
    let layers = net.layers_mut();
    let shapes_ok = grads.weights.len() == layers.len()
        && state.first_moment.weights.len() == layers.len()
        && layers.iter().enumerate().all(|(i, l)| {
            grads.weights[i].len() == l.weights.len()
                && grads.biases[i].len() == l.bias.len()
                && state.first_moment.weights[i].len() == l.weights.len()
                && state.first_moment.biases[i].len() == l.bias.len()
        });
    if !shapes_ok {
        return Err(CaeError::Shape("gradient shapes do not match parameters".into()));
    }

    state.step_count += 1;
    let h = state.hyper;
    let t = state.step_count as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
        }
    };

    for (i, layer) in layers.iter_mut().enumerate() {
        update(
            &mut layer.weights,
            &grads.weights[i],
            &mut state.first_moment.weights[i],
            &mut state.second_moment.weights[i],
        );
        update(
            &mut layer.bias,
            &grads.biases[i],
            &mut state.first_moment.biases[i],
            &mut state.second_moment.biases[i],
        );
    }
    Ok(())
}

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::LossBreakdown;
use crate::error::{CaeError, Result};

/// Why a training loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Total loss fell below the tolerance.
    Tolerance,
    /// Reconstruction loss reached the noise-aware threshold.
    Threshold,
    Plateau,
    MaxEpochs,
    NonFinite,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::Threshold => "threshold",
            StopReason::Plateau => "plateau",
            StopReason::MaxEpochs => "max_epochs",
            StopReason::NonFinite => "non_finite",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: LossBreakdown,
    /// Lowest total seen so far, this epoch included.
    pub best_total: f64,
    /// Mean `|grad nu_j|` over the points visited this epoch.
    pub grad_norms: Vec<f64>,
}

/// Metrics of the final parameters over the full training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEval {
    pub loss: LossBreakdown,
    pub grad_norms: Vec<f64>,
    pub latent_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub latent_width: usize,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: Option<StopReason>,
    pub final_eval: Option<FinalEval>,
    /// Epoch at which `best_total` last improved by more than the plateau margin.
    pub best_epoch: usize,
}

impl TrainingTrace {
    pub fn new(latent_width: usize) -> Self {
        Self {
            latent_width,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Final-parameter gradient norms when available, else the last epoch's.
    pub fn final_grad_norms(&self) -> Option<&[f64]> {
        self.final_eval
            .as_ref()
            .map(|f| f.grad_norms.as_slice())
            .or_else(|| self.last().map(|e| e.grad_norms.as_slice()))
    }

    pub fn final_loss(&self) -> Option<LossBreakdown> {
        self.final_eval
            .as_ref()
            .map(|f| f.loss)
            .or_else(|| self.last().map(|e| e.loss))
    }

    /// CSV with one row per epoch; the stop reason fills the last row only.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,recon,ortho,supervised,total");
        for j in 1..=self.latent_width {
            out.push_str(&format!(",grad_norm_nu_{j}"));
        }
        out.push_str(",stop_reason\n");
        let last = self.epochs.len().saturating_sub(1);
        for (i, e) in self.epochs.iter().enumerate() {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e}",
                e.epoch, e.loss.reconstruction, e.loss.orthogonality, e.loss.supervised, e.loss.total
            ));
            for g in &e.grad_norms {
                out.push_str(&format!(",{g:e}"));
            }
            out.push(',');
            if i == last {
                if let Some(r) = self.stop_reason {
                    out.push_str(r.as_str());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| CaeError::io(path, e))
    }
}

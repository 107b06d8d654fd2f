//! JSON checkpoint encoding for networks.
//!
//! Floats are written with the shortest representation that parses back to
//! the same `f64`, so save/load is value-exact.

use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use super::network::{Layer, LayerSpec, MlpNetwork};
use crate::error::{CaeError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    pub in_width: usize,
    pub out_width: usize,
    pub activation: ActivationKind,
    /// One inner array per output row.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub seed: u64,
    pub layers: Vec<LayerRecord>,
}

impl From<&MlpNetwork> for NetworkRecord {
    fn from(net: &MlpNetwork) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerRecord {
                in_width: l.spec.in_width,
                out_width: l.spec.out_width,
                activation: l.spec.activation,
                weights: l.weights.chunks(l.spec.in_width).map(<[f64]>::to_vec).collect(),
                bias: l.bias.clone(),
            })
            .collect();
        NetworkRecord {
            seed: net.seed(),
            layers,
        }
    }
}

impl TryFrom<NetworkRecord> for MlpNetwork {
    type Error = CaeError;

    fn try_from(rec: NetworkRecord) -> Result<Self> {
        let mut layers = Vec::with_capacity(rec.layers.len());
        for (i, l) in rec.layers.into_iter().enumerate() {
            if l.weights.len() != l.out_width || l.weights.iter().any(|r| r.len() != l.in_width) {
                return Err(CaeError::Shape(format!(
                    "checkpoint layer {i}: weight rows do not match {}x{}",
                    l.out_width, l.in_width
                )));
            }
            layers.push(Layer {
                spec: LayerSpec::new(l.in_width, l.out_width, l.activation),
                weights: l.weights.into_iter().flatten().collect(),
                bias: l.bias,
            });
        }
        MlpNetwork::from_layers(layers, rec.seed)
    }
}

pub fn network_to_json(net: &MlpNetwork) -> Result<String> {
    Ok(serde_json::to_string_pretty(&NetworkRecord::from(net))?)
}

pub fn network_from_json(text: &str) -> Result<MlpNetwork> {
    let rec: NetworkRecord = serde_json::from_str(text)?;
    rec.try_into()
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CaeError, Result};
use crate::nn::checkpoint::NetworkRecord;
use crate::nn::{chain_specs, init_params_scaled, ActivationKind, MlpNetwork};

/// Shape of the encoder; the decoder mirrors it.
///
/// Both networks have `depth` affine layers. Hidden layers have `width`
/// units, and `activations[i]` is applied after layer `i` of each network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub depth: usize,
    pub width: usize,
    pub activations: Vec<ActivationKind>,
    /// Multiplier on the default uniform initialization bound.
    #[serde(default = "unit")]
    pub init_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Architecture {
    pub fn uniform(depth: usize, width: usize, activation: ActivationKind) -> Self {
        Self {
            depth,
            width,
            activations: vec![activation; depth],
            init_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(CaeError::config("architecture.depth", "depth must be positive"));
        }
        if self.width == 0 {
            return Err(CaeError::config("architecture.width", "width must be positive"));
        }
        if self.activations.len() != self.depth {
            return Err(CaeError::config(
                "architecture.activations",
                format!("{} activations for depth {}", self.activations.len(), self.depth),
            ));
        }
        if !(self.init_scale > 0.0) {
            return Err(CaeError::config("architecture.init_scale", "must be positive"));
        }
        Ok(())
    }

    fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(std::iter::repeat_n(self.width, self.depth - 1));
        w.push(output);
        w
    }
}

/// Encoder/decoder pair with a shared latent width.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub encoder: MlpNetwork,
    pub decoder: MlpNetwork,
}

impl CaeModel {
    pub fn new(encoder: MlpNetwork, decoder: MlpNetwork) -> Result<Self> {
        if encoder.output_width() != decoder.input_width() {
            return Err(CaeError::Shape(format!(
                "encoder emits {} latents but decoder takes {}",
                encoder.output_width(),
                decoder.input_width()
            )));
        }
        if decoder.output_width() != encoder.input_width() {
            return Err(CaeError::Shape("decoder output must match encoder input".into()));
        }
        Ok(Self { encoder, decoder })
    }

    /// Randomly initialized model; the decoder draws from a seed derived from `seed`.
    pub fn init(arch: &Architecture, ambient: usize, latent: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        let enc_spec = chain_specs(&arch.widths(ambient, latent), &arch.activations)?;
        let dec_spec = chain_specs(&arch.widths(latent, ambient), &arch.activations)?;
        let encoder = init_params_scaled(&enc_spec, seed, arch.init_scale)?;
        let decoder = init_params_scaled(&dec_spec, decoder_seed(seed), arch.init_scale)?;
        Self::new(encoder, decoder)
    }

    pub fn ambient(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn latent_width(&self) -> usize {
        self.encoder.output_width()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.encoder.forward(x)
    }

    pub fn decode(&self, nu: &[f64]) -> Result<Vec<f64>> {
        self.decoder.forward(nu)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = ModelRecord {
            encoder: (&self.encoder).into(),
            decoder: (&self.decoder).into(),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ModelRecord = serde_json::from_str(text)?;
        Self::new(rec.encoder.try_into()?, rec.decoder.try_into()?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| CaeError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CaeError::io(path, e))?;
        Self::from_json(&text)
    }
}

fn decoder_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    encoder: NetworkRecord,
    decoder: NetworkRecord,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn architecture_shapes() {
        let arch = Architecture::uniform(5, 10, ActivationKind::Tanh);
        let m = CaeModel::init(&arch, 3, 3, 0).unwrap();
        assert_eq!(m.encoder.layers().len(), 5);
        assert_eq!(m.encoder.specs()[0].out_width, 10);
        assert_eq!(m.decoder.specs()[4].out_width, 3);
        assert_eq!(m.latent_width(), 3);
        assert_ne!(m.encoder.flat_params()[..5], m.decoder.flat_params()[..5]);
    }

    #[test]
    fn depth_one_is_a_single_affine_map() {
        let arch = Architecture::uniform(1, 99, ActivationKind::Identity);
        let m = CaeModel::init(&arch, 4, 2, 0).unwrap();
        assert_eq!(m.encoder.specs()[0].in_width, 4);
        assert_eq!(m.encoder.specs()[0].out_width, 2);
    }

    #[test]
    fn bad_architectures_are_rejected() {
        let mut arch = Architecture::uniform(3, 10, ActivationKind::Tanh);
        arch.activations.pop();
        assert!(matches!(arch.validate(), Err(CaeError::Config { .. })));
    }

    #[test]
    fn model_checkpoint_round_trip() {
        let arch = Architecture::uniform(2, 4, ActivationKind::Tanh);
        let m = CaeModel::init(&arch, 3, 3, 8).unwrap();
        assert_eq!(CaeModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}

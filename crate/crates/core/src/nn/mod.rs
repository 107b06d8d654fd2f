//! Feed-forward networks, input Jacobians and the Adam optimizer.

mod activation;
mod adam;
pub mod checkpoint;
mod network;

pub use activation::ActivationKind;
pub use adam::{adam_step, AdamConfig, AdamState};
pub use network::{
    chain_specs, init_params, init_params_scaled, validate_specs, JacobianBundle, Layer,
    LayerSpec, MlpNetwork, NetworkGrad, Tape,
};
pub(crate) use network::dot;

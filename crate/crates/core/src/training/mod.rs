//! Conformal autoencoder objective and training loops.

mod loss;
mod model;
mod trace;
mod train;

pub use loss::{
    cae_loss, loss_gradients, mean_gradient_norms, orthogonality_vectors, BatchEval, CaeGrad,
    Evaluator, GradientSpace, LossBreakdown, LossSpec, PairSet, Supervised,
};
pub use model::{Architecture, CaeModel};
pub use trace::{EpochRecord, FinalEval, StopReason, TrainingTrace};
pub use train::{
    evaluate_full, orthogonalize_posthoc, orthogonalize_posthoc_pairs, record_epoch, robustness_threshold, stop, train_cae,
    train_cae_projected, train_with_loss, StopMode, TrainAbort, TrainConfig, TrainResult,
    PLATEAU_MARGIN,
};

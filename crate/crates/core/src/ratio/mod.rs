//! Learning the stationary likelihood ratio `π / π̃` from one
//! alternative-system path.

pub mod adam;
pub mod loss;
pub mod network;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    bandwidth_specs, delta_residual, empirical_loss, loss_and_gradient, loss_gradient,
    weighted_loss, LossValue, TransitionBatch, TransitionPair,
};
pub use network::{Normalization, RatioModel};
pub use train::{train, TrainConfig};

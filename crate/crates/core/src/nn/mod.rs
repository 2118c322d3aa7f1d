//! Segmentation models, losses and optimizers.

mod grad;
mod loss;
mod model;
mod optim;
mod params;
mod spec;

pub use grad::{loss_and_grad, per_sample_grads};
pub use loss::{dice_loss, dice_score, predict_mask};
pub use model::{build_model, count_macs, count_params, instance_norm, Model, NORM_EPS};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::ParamSet;
pub use spec::{BackboneStyle, ModelSpec};

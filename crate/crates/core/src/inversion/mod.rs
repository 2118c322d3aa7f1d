//! Gradient inversion: recover a training image from a shared update by
//! optimizing a candidate image until the gradient it induces points the same
//! way as the captured one.

mod analytic;
mod attack;
mod metrics;

pub use analytic::analytic_fc_reconstruction;
pub use attack::{cosine_gradient_loss, invert, random_mask, AttackConfig, AttackResult, AttackStop};
pub use metrics::{evaluate_reconstruction, random_baseline_psnr};

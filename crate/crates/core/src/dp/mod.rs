//! DP-SGD and privacy accounting.
//!
//! Noise is drawn from a seeded counter-based generator so runs can be
//! replayed exactly. That is the point for experiments and the reason the
//! noise is not suitable for protecting real data.

mod accountant;
mod mechanism;
mod regime;
mod step;

pub use accountant::{
    default_orders, enforce_budget, epsilon_from_rdp, rdp_gaussian, rdp_subsampled_gaussian, to_epsilon,
    AccountantState, BudgetDecision,
};
pub use mechanism::{clip_per_sample, l2_norm, noise_and_average};
pub use regime::{PrivacyRegime, RegimeName};
pub use step::{dp_sgd_step, DpStepOutcome};

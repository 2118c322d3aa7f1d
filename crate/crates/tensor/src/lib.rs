//! Dense `f64` tensors with a reverse-mode differentiation record.
//!
//! Ops record their inputs whenever one of them requires grad and recording is
//! enabled on the current thread (see [`no_grad`]). [`backward`] walks the
//! record; with `build_graph = true` the returned gradients are recorded too,
//! which is what second-order uses (gradient matching, Hessian-vector
//! products) rely on.
//!
//! A record lives on one thread. Tensors are `Send + Sync`, so independent
//! replicas can be evaluated on separate threads.

mod autograd;
mod conv;
mod error;
mod gradcheck;
pub mod io;
mod ops;
pub mod rng;
mod tensor;

pub use autograd::backward;
pub use conv::Conv2dConfig;
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, hvp_check, GradCheckReport};
pub use tensor::{no_grad, set_grad_enabled, GradModeGuard, Tensor};

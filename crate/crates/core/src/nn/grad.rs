use privseg_tensor::{backward, Tensor};
use rayon::prelude::*;

use super::loss::dice_loss;
use super::model::Model;
use super::params::ParamSet;
use crate::error::Result;

/// Dice loss of the whole batch and its flat gradient, in one backward pass.
pub fn loss_and_grad(model: &Model, params: &ParamSet, images: &Tensor, masks: &Tensor) -> Result<(f64, Vec<f64>)> {
    model.check_params(params)?;
    let leaves = params.leaves();
    let loss = dice_loss(&model.forward_tensors(&leaves, images)?, masks)?;
    let grads = backward(&loss, &leaves, false)?;
    let mut flat = Vec::with_capacity(params.numel());
    for g in &grads {
        flat.extend_from_slice(g.data());
    }
    Ok((loss.item()?, flat))
}

/// One backward pass per `(image, mask)` pair, each `(1,1,H,W)`. Samples may be
/// processed on several threads; results come back in input order.
pub fn per_sample_grads(model: &Model, params: &ParamSet, samples: &[(Tensor, Tensor)]) -> Result<Vec<(f64, Vec<f64>)>> {
    samples
        .par_iter()
        .map(|(x, y)| loss_and_grad(model, params, x, y))
        .collect()
}

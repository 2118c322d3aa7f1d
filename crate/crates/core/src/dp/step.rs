use privseg_tensor::rng::CounterRng;
use privseg_tensor::Tensor;

use super::accountant::{enforce_budget, to_epsilon, AccountantState, BudgetDecision};
use super::mechanism::{clip_per_sample, noise_and_average};
use super::regime::PrivacyRegime;
use crate::error::{invalid, Error, Result};
use crate::nn::{per_sample_grads, Model, Optimizer, ParamSet};

#[derive(Clone, Debug)]
pub struct DpStepOutcome {
    pub params: ParamSet,
    /// Mean per-sample loss at the parameters before the step.
    pub loss: f64,
    /// The privatized gradient that was handed to the optimizer.
    pub noisy_grad: Vec<f64>,
    pub epsilon: f64,
}

/// One DP-SGD step: per-sample gradients, clipping to `C`, Gaussian noise
/// `σC`, averaging, optimizer update.
///
/// The budget is checked first against the accountant advanced by one step.
/// If that would exceed the budget nothing is computed or applied and
/// [`Error::BudgetExceeded`] is returned; `acct` is left unchanged.
#[allow(clippy::too_many_arguments)]
pub fn dp_sgd_step(
    model: &Model,
    params: &ParamSet,
    batch: &[(Tensor, Tensor)],
    regime: &PrivacyRegime,
    federated: bool,
    optimizer: &mut Optimizer,
    acct: &mut AccountantState,
    rng: &mut CounterRng,
) -> Result<DpStepOutcome> {
    if batch.is_empty() {
        return Err(invalid("dp_sgd_step: empty batch"));
    }
    let next = acct.after(1);
    if let BudgetDecision::Abort { epsilon } = enforce_budget(&next, regime, federated)? {
        return Err(Error::BudgetExceeded {
            worker: None,
            round: None,
            step: next.steps_taken(),
            epsilon_next: epsilon,
            epsilon_spent: to_epsilon(acct, regime.delta)?.0,
            budget: regime.budget(federated),
        });
    }

    let per_sample = per_sample_grads(model, params, batch)?;
    let loss = per_sample.iter().map(|(l, _)| l).sum::<f64>() / batch.len() as f64;
    let grads: Vec<Vec<f64>> = per_sample.into_iter().map(|(_, g)| g).collect();
    let clipped = clip_per_sample(&grads, regime.clip_norm)?;
    let noisy_grad = noise_and_average(&clipped, regime.noise_multiplier, regime.clip_norm, rng)?;

    let mut flat = params.flatten();
    optimizer.step(&mut flat, &noisy_grad);
    *acct = next;
    Ok(DpStepOutcome {
        params: params.unflatten(&flat)?,
        loss,
        noisy_grad,
        epsilon: to_epsilon(acct, regime.delta)?.0,
    })
}

use privseg_tensor::rng::{stream_id, CounterRng};
use privseg_tensor::{backward, Tensor};

use super::metrics::evaluate_reconstruction;
use crate::error::{invalid, Error, Result};
use crate::nn::{dice_loss, Model, ParamSet};

/// `1 − ⟨c, g⟩ / (‖c‖·‖g‖)` over all tensors taken as one vector.
/// Differentiable in `candidate`; `captured` is treated as a constant.
pub fn cosine_gradient_loss(candidate: &[Tensor], captured: &[Tensor]) -> Result<Tensor> {
    if candidate.len() != captured.len() || candidate.is_empty() {
        return Err(invalid(format!("{} candidate vs {} captured gradient tensors", candidate.len(), captured.len())));
    }
    let mut g_norm2 = 0.0;
    let mut dot: Option<Tensor> = None;
    let mut c_norm2: Option<Tensor> = None;
    for (c, g) in candidate.iter().zip(captured) {
        if c.shape() != g.shape() {
            return Err(invalid(format!("gradient shapes {:?} and {:?} differ", c.shape(), g.shape())));
        }
        g_norm2 += g.data().iter().map(|v| v * v).sum::<f64>();
        let d = c.dot(&g.detach())?;
        let n = c.dot(c)?;
        dot = Some(match dot {
            Some(acc) => acc.add(&d)?,
            None => d,
        });
        c_norm2 = Some(match c_norm2 {
            Some(acc) => acc.add(&n)?,
            None => n,
        });
    }
    if !(g_norm2 > 0.0) {
        return Err(Error::ZeroNormGradient);
    }
    let (dot, c_norm2) = (dot.expect("nonempty"), c_norm2.expect("nonempty"));
    let cos = dot.mul(&c_norm2.powf(-0.5))?.mul_scalar(1.0 / g_norm2.sqrt());
    Ok(cos.neg().add_scalar(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    pub max_iters: usize,
    pub lr: f64,
    pub init_seed: u64,
    /// Stop after this many consecutive iterations above `divergence_factor × best`.
    pub divergence_patience: usize,
    pub divergence_factor: f64,
    pub record_curve: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            max_iters: 2000,
            lr: 0.1,
            init_seed: 0,
            divergence_patience: 50,
            divergence_factor: 2.0,
            record_curve: true,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.divergence_patience == 0 || !(self.divergence_factor > 1.0) || !(self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid attack settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackStop {
    MaxIters,
    Diverged,
}

impl AttackStop {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackStop::MaxIters => "max_iters",
            AttackStop::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttackResult {
    /// Best iterate, `(1,1,H,W)`.
    pub reconstruction: Tensor,
    /// Matching loss at each iteration (before that iteration's update).
    pub loss_curve: Vec<f64>,
    pub best_loss: f64,
    pub best_iter: usize,
    pub iterations: usize,
    pub stop_reason: AttackStop,
    /// Filled in by [`AttackResult::score`].
    pub mse: Option<f64>,
    pub psnr: Option<f64>,
}

impl AttackResult {
    pub fn score(&mut self, original: &Tensor) -> Result<(f64, f64)> {
        let (mse, psnr) = evaluate_reconstruction(&self.reconstruction, original)?;
        self.mse = Some(mse);
        self.psnr = Some(psnr);
        Ok((mse, psnr))
    }
}

/// Seeded random binary mask, for attacking without the victim's mask.
pub fn random_mask(h: usize, w: usize, seed: u64) -> Result<Tensor> {
    let mut rng = CounterRng::new(seed, stream_id(&[0x3A5C]));
    let data = (0..h * w).map(|_| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 }).collect();
    Ok(Tensor::new(data, &[1, 1, h, w])?)
}

fn uniform_image(shape: &[usize], seed: u64) -> Result<Tensor> {
    let mut rng = CounterRng::new(seed, stream_id(&[0x1A17]));
    let n: usize = shape.iter().product();
    Ok(Tensor::new((0..n).map(|_| rng.next_f64()).collect(), shape)?)
}

/// Gradient descent on the image: at each iteration the Dice-loss gradient
/// of `(image, mask)` at `global` is computed with the graph kept, compared
/// with `target` by [`cosine_gradient_loss`], and the image moves against the
/// gradient of that loss and is clamped to `[0,1]`.
///
/// The image starts as seeded uniform noise unless `init` is given.
pub fn invert(
    model: &Model,
    global: &ParamSet,
    target: &ParamSet,
    mask: &Tensor,
    cfg: &AttackConfig,
    init: Option<&Tensor>,
) -> Result<AttackResult> {
    cfg.validate()?;
    model.check_params(global)?;
    global.check_layout(target, "captured gradient")?;
    let (h, w) = match *mask.shape() {
        [1, 1, h, w] | [1, h, w] => (h, w),
        _ => return Err(invalid(format!("mask must be (1,1,H,W) or (1,H,W), got {:?}", mask.shape()))),
    };
    let shape = [1, 1, h, w];
    let mask = mask.with_shape(&shape)?;
    let mut x = match init {
        Some(t) => t.with_shape(&shape)?,
        None => uniform_image(&shape, cfg.init_seed)?,
    };
    let captured = target.tensors();

    let mut curve = Vec::new();
    let mut best = (f64::INFINITY, x.clone(), 0);
    let mut above = 0;
    let mut stop = AttackStop::MaxIters;
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        let xl = x.requires_grad();
        let leaves = global.leaves();
        let train_loss = dice_loss(&model.forward_tensors(&leaves, &xl)?, &mask)?;
        let grads = backward(&train_loss, &leaves, true)?;
        let loss = cosine_gradient_loss(&grads, &captured)?;
        let v = loss.item()?;
        iterations = it + 1;
        if !v.is_finite() {
            stop = AttackStop::Diverged;
            break;
        }
        if cfg.record_curve {
            curve.push(v);
        }
        if v < best.0 {
            best = (v, x.clone(), it);
        }
        if v > cfg.divergence_factor * best.0 {
            above += 1;
            if above >= cfg.divergence_patience {
                stop = AttackStop::Diverged;
                break;
            }
        } else {
            above = 0;
        }
        let gx = backward(&loss, &[xl], false)?.remove(0);
        let next: Vec<f64> = x
            .data()
            .iter()
            .zip(gx.data())
            .map(|(p, g)| (p - cfg.lr * g).clamp(0.0, 1.0))
            .collect();
        x = Tensor::new(next, &shape)?;
    }
    Ok(AttackResult {
        reconstruction: best.1,
        loss_curve: curve,
        best_loss: best.0,
        best_iter: best.2,
        iterations,
        stop_reason: stop,
        mse: None,
        psnr: None,
    })
}

use privseg_tensor::Tensor;

use crate::error::{invalid, Result};

const SMOOTH: f64 = 1.0;

/// `1 − mean_n (2Σ s·t + 1) / (Σ s + Σ t + 1)` with `s = sigmoid(logits)`,
/// sums taken per sample over all channels and pixels.
pub fn dice_loss(logits: &Tensor, target: &Tensor) -> Result<Tensor> {
    if logits.shape() != target.shape() || logits.rank() != 4 {
        return Err(invalid(format!(
            "dice_loss expects equal NCHW shapes, got {:?} and {:?}",
            logits.shape(),
            target.shape()
        )));
    }
    let n = logits.shape()[0];
    let s = logits.sigmoid();
    let per_sample = |t: Tensor| -> Result<Tensor> {
        let c = t.shape()[1];
        let r = t.spatial_sum()?;
        if c == 1 {
            Ok(r.reshape(&[n])?)
        } else {
            // sum channels: [N,C] @ ones[C,1]
            Ok(r.matmul(&Tensor::ones(&[c, 1])?)?.reshape(&[n])?)
        }
    };
    let inter = per_sample(s.mul(target)?)?;
    let denom = per_sample(s.clone())?.add(&per_sample(target.clone())?)?.add_scalar(SMOOTH);
    let ratio = inter.mul_scalar(2.0).add_scalar(SMOOTH).div(&denom)?;
    Ok(ratio.mean().neg().add_scalar(1.0))
}

fn foreground(t: &Tensor, which: &str) -> Result<Vec<bool>> {
    t.data()
        .iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(invalid(format!("dice_score: {which} mask is not binary (value {v})")))
            }
        })
        .collect()
}

/// Hard Dice `2|A∩B| / (|A|+|B|)`; 1.0 when both masks are empty.
pub fn dice_score(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(invalid(format!("dice_score: shapes {:?} and {:?} differ", pred.shape(), target.shape())));
    }
    let a = foreground(pred, "predicted")?;
    let b = foreground(target, "target")?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(&b) {
        inter += (x && y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Binary mask from logits: foreground where `sigmoid(logit) > 0.5`.
pub fn predict_mask(logits: &Tensor) -> Tensor {
    let data = logits.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    Tensor::new(data, logits.shape()).expect("same shape")
}

use privseg_tensor::Tensor;

use crate::error::{invalid, Error, Result};

const MIN_BIAS_GRAD: f64 = 1e-9;

/// For a fully connected first layer `y = Wx + b` on a single sample,
/// `∇W = δ xᵀ` and `∇b = δ`, so any row with `∇b_i ≠ 0` gives
/// `x = ∇W_i / ∇b_i`. Uses the row with the largest `|∇b_i|`.
pub fn analytic_fc_reconstruction(weight_grad: &Tensor, bias_grad: &Tensor) -> Result<Tensor> {
    let (out, inp) = match *weight_grad.shape() {
        [o, i] => (o, i),
        _ => return Err(invalid(format!("weight gradient must be (out,in), got {:?}", weight_grad.shape()))),
    };
    if bias_grad.numel() != out {
        return Err(invalid(format!("bias gradient has {} entries, expected {out}", bias_grad.numel())));
    }
    let (row, db) = bias_grad
        .data()
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("out >= 1");
    if !(db.abs() > MIN_BIAS_GRAD) {
        return Err(Error::Unrecoverable);
    }
    let x = weight_grad.data()[row * inp..(row + 1) * inp].iter().map(|v| v / db).collect();
    Ok(Tensor::new(x, &[inp])?)
}

//! Central finite-difference checks of the analytic gradients.

use crate::autograd::backward;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Elementwise comparison of analytic and finite-difference derivatives.
///
/// `max_rel_err` divides each absolute error by
/// `max(|analytic|, |numeric|, 1e-4 * max_j |numeric_j|)`, so entries that are
/// many orders of magnitude below the largest component are judged against a
/// floor tied to the gradient's scale rather than against their own size.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheckReport {
    fn compare(analytic: Vec<f64>, numeric: Vec<f64>) -> Self {
        let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (1e-4 * scale).max(1e-300);
        let mut max_abs_err = 0.0f64;
        let mut max_rel_err = 0.0f64;
        for (a, n) in analytic.iter().zip(&numeric) {
            let e = (a - n).abs();
            max_abs_err = max_abs_err.max(e);
            max_rel_err = max_rel_err.max(e / a.abs().max(n.abs()).max(floor));
        }
        Self {
            max_abs_err,
            max_rel_err,
            analytic,
            numeric,
        }
    }
}

fn central_differences(f: &impl Fn(&Tensor) -> Result<Tensor>, point: &Tensor, step: f64) -> Result<Vec<f64>> {
    let base = point.to_vec();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += step;
        let mut minus = base.clone();
        minus[i] -= step;
        let fp = f(&Tensor::new(plus, point.shape())?)?.item()?;
        let fm = f(&Tensor::new(minus, point.shape())?)?.item()?;
        out.push((fp - fm) / (2.0 * step));
    }
    Ok(out)
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(TensorError::InvalidArgument {
            op: "grad_check",
            detail: format!("step must be positive, got {step}"),
        });
    }
    Ok(())
}

/// Compares `backward` of `f` at `point` with central differences of step `step`.
pub fn grad_check(f: impl Fn(&Tensor) -> Result<Tensor>, point: &Tensor, step: f64) -> Result<GradCheckReport> {
    check_step(step)?;
    let x = point.requires_grad();
    let y = f(&x)?;
    if y.numel() != 1 {
        return Err(TensorError::NotScalar(y.shape().to_vec()));
    }
    let analytic = backward(&y, &[x], false)?.remove(0).to_vec();
    let numeric = central_differences(&f, point, step)?;
    Ok(GradCheckReport::compare(analytic, numeric))
}

/// Second-order check: the Hessian-vector product `H v` obtained by
/// differentiating `<grad f, v>` (a backward through a recorded backward) is
/// compared with central differences of the first gradient along `v`.
pub fn hvp_check(f: impl Fn(&Tensor) -> Result<Tensor>, point: &Tensor, direction: &Tensor, step: f64) -> Result<GradCheckReport> {
    check_step(step)?;
    if direction.shape() != point.shape() {
        return Err(TensorError::InvalidArgument {
            op: "hvp_check",
            detail: format!("direction {:?} vs point {:?}", direction.shape(), point.shape()),
        });
    }
    let grad_at = |p: &Tensor, build: bool| -> Result<Tensor> {
        let x = p.requires_grad();
        let y = f(&x)?;
        Ok(backward(&y, &[x], build)?.remove(0))
    };

    let x = point.requires_grad();
    let y = f(&x)?;
    if y.numel() != 1 {
        return Err(TensorError::NotScalar(y.shape().to_vec()));
    }
    let g = backward(&y, &[x.clone()], true)?.remove(0);
    let gv = g.dot(direction)?;
    let analytic = if gv.is_tracked() {
        backward(&gv, &[x], false)?.remove(0).to_vec()
    } else {
        // gradient independent of x: zero curvature
        vec![0.0; point.numel()]
    };

    let shifted = |sign: f64| -> Result<Tensor> {
        let data = point.data().iter().zip(direction.data()).map(|(p, d)| p + sign * step * d).collect();
        Tensor::new(data, point.shape())
    };
    let gp = grad_at(&shifted(1.0)?, false)?;
    let gm = grad_at(&shifted(-1.0)?, false)?;
    let numeric = gp.data().iter().zip(gm.data()).map(|(a, b)| (a - b) / (2.0 * step)).collect();
    Ok(GradCheckReport::compare(analytic, numeric))
}

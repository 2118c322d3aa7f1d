//! Rényi-DP accounting for the sampled Gaussian mechanism at integer orders.

use super::regime::PrivacyRegime;
use crate::error::{invalid, Result};

/// Orders 2..=64 plus 128 and 256.
pub fn default_orders() -> Vec<u32> {
    (2..=64).chain([128, 256]).collect()
}

/// RDP of the Gaussian mechanism with noise multiplier `sigma`: `α / (2σ²)`.
pub fn rdp_gaussian(sigma: f64, alpha: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(alpha > 1.0) {
        return Err(invalid(format!("rdp_gaussian needs sigma > 0 and alpha > 1, got sigma={sigma}, alpha={alpha}")));
    }
    Ok(alpha / (2.0 * sigma * sigma))
}

/// RDP at integer order `alpha` of the Gaussian mechanism applied to a
/// Poisson-style subsample with rate `q`:
///
/// `1/(α−1) · log Σ_k C(α,k) (1−q)^(α−k) q^k exp(k(k−1)/(2σ²))`
///
/// The sum is evaluated as a log-sum-exp.
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: u32) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) || !(sigma > 0.0) || alpha < 2 {
        return Err(invalid(format!(
            "rdp_subsampled_gaussian needs 0 < q <= 1, sigma > 0, alpha >= 2; got q={q}, sigma={sigma}, alpha={alpha}"
        )));
    }
    let a = alpha as f64;
    let (lq, l1q) = (q.ln(), (1.0 - q).ln());
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let mut log_binom = 0.0;
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    for k in 0..=alpha {
        if k > 0 {
            log_binom += ((alpha - k + 1) as f64).ln() - (k as f64).ln();
        }
        let kf = k as f64;
        // (1-q)^0 is 1 even when q = 1
        let rest = if k == alpha { 0.0 } else { (a - kf) * l1q };
        let t = log_binom + rest + kf * lq + kf * (kf - 1.0) * inv2s2;
        if t > f64::NEG_INFINITY {
            terms.push(t);
        }
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
    Ok((lse / (a - 1.0)).max(0.0))
}

/// Per-order RDP of a fixed sampled Gaussian mechanism composed `steps` times.
#[derive(Clone, Debug, PartialEq)]
pub struct AccountantState {
    orders: Vec<u32>,
    per_step: Vec<f64>,
    sampling_rate: f64,
    sigma: f64,
    steps: u64,
}

impl AccountantState {
    pub fn new(sampling_rate: f64, sigma: f64) -> Result<Self> {
        Self::with_orders(default_orders(), sampling_rate, sigma)
    }

    /// `sigma = 0` is accepted and gives infinite RDP at every order.
    pub fn with_orders(orders: Vec<u32>, sampling_rate: f64, sigma: f64) -> Result<Self> {
        if orders.is_empty() || orders.windows(2).any(|w| w[0] >= w[1]) || orders[0] < 2 {
            return Err(invalid("orders must be ascending integers >= 2"));
        }
        if !(sampling_rate > 0.0 && sampling_rate <= 1.0) || !(sigma >= 0.0) {
            return Err(invalid(format!("accountant needs 0 < q <= 1 and sigma >= 0, got q={sampling_rate}, sigma={sigma}")));
        }
        let per_step = if sigma == 0.0 {
            vec![f64::INFINITY; orders.len()]
        } else {
            orders
                .iter()
                .map(|&a| rdp_subsampled_gaussian(sampling_rate, sigma, a))
                .collect::<Result<_>>()?
        };
        Ok(AccountantState {
            orders,
            per_step,
            sampling_rate,
            sigma,
            steps: 0,
        })
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn per_step_rdp(&self) -> &[f64] {
        &self.per_step
    }

    /// `steps_taken × per_step_rdp`, order by order.
    pub fn rdp_accumulated(&self) -> Vec<f64> {
        let t = self.steps as f64;
        self.per_step.iter().map(|&r| if self.steps == 0 { 0.0 } else { t * r }).collect()
    }

    pub fn step(&mut self) {
        self.steps += 1;
    }

    pub fn advance(&mut self, n: u64) {
        self.steps += n;
    }

    /// Copy with `n` more steps.
    pub fn after(&self, n: u64) -> Self {
        let mut a = self.clone();
        a.advance(n);
        a
    }
}

/// `min_α [rdp(α) + log(1/δ)/(α−1)]` and the minimizing order.
pub fn epsilon_from_rdp(orders: &[u32], rdp: &[f64], delta: f64) -> Result<(f64, u32)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must be in (0,1), got {delta}")));
    }
    if orders.is_empty() || orders.len() != rdp.len() {
        return Err(invalid("orders and rdp values must be nonempty and of equal length"));
    }
    let log_inv_delta = (1.0 / delta).ln();
    let mut best = (f64::INFINITY, orders[0]);
    for (&a, &r) in orders.iter().zip(rdp) {
        let eps = r + log_inv_delta / (a as f64 - 1.0);
        if eps < best.0 {
            best = (eps, a);
        }
    }
    Ok(best)
}

pub fn to_epsilon(acct: &AccountantState, delta: f64) -> Result<(f64, u32)> {
    epsilon_from_rdp(&acct.orders, &acct.rdp_accumulated(), delta)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BudgetDecision {
    Continue { epsilon: f64 },
    Abort { epsilon: f64 },
}

impl BudgetDecision {
    pub fn is_abort(&self) -> bool {
        matches!(self, BudgetDecision::Abort { .. })
    }
}

/// Whether the privacy loss recorded in `acct` is still within budget.
pub fn enforce_budget(acct: &AccountantState, regime: &PrivacyRegime, federated: bool) -> Result<BudgetDecision> {
    let (epsilon, _) = to_epsilon(acct, regime.delta)?;
    Ok(if epsilon > regime.budget(federated) {
        BudgetDecision::Abort { epsilon }
    } else {
        BudgetDecision::Continue { epsilon }
    })
}

//! Reference privacy accounting computed by numerical integration instead of
//! the binomial expansion used by the library.
//!
//! For the subsampled Gaussian with sensitivity 1 the Rényi divergence of
//! order α is `ln E_{z~N(0,σ²)}[(1 − q + q·exp((2z − 1)/(2σ²)))^α] / (α − 1)`.
//! The expectation is evaluated with the trapezoid rule in log space.
#![allow(dead_code)]

fn ln_one_minus_q_plus_q_exp(q: f64, u: f64) -> f64 {
    if q == 1.0 {
        return u;
    }
    if u > 0.0 {
        u + (q + (1.0 - q) * (-u).exp()).ln()
    } else {
        (1.0 - q + q * u.exp()).ln()
    }
}

pub fn rdp_quadrature(q: f64, sigma: f64, alpha: u32) -> f64 {
    let a = alpha as f64;
    let s2 = sigma * sigma;
    let h = sigma / 64.0;
    let (lo, hi) = (-14.0 * sigma, a + 14.0 * sigma);
    let n = ((hi - lo) / h).ceil() as usize;
    let norm = -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    let logs: Vec<f64> = (0..=n)
        .map(|i| {
            let z = lo + i as f64 * h;
            norm - z * z / (2.0 * s2) + a * ln_one_minus_q_plus_q_exp(q, (2.0 * z - 1.0) / (2.0 * s2))
        })
        .collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logs.iter().map(|l| (l - m).exp()).sum();
    (m + sum.ln() + h.ln()) / (a - 1.0)
}

pub fn oracle_orders() -> Vec<u32> {
    let mut v: Vec<u32> = (2..=64).collect();
    v.push(128);
    v.push(256);
    v
}

/// `(ε, α*)` after `steps` compositions.
pub fn epsilon_oracle(q: f64, sigma: f64, steps: u64, delta: f64) -> (f64, u32) {
    oracle_orders()
        .into_iter()
        .map(|a| (steps as f64 * rdp_quadrature(q, sigma, a) + (1.0 / delta).ln() / (a as f64 - 1.0), a))
        .fold((f64::INFINITY, 0), |best, c| if c.0 < best.0 { c } else { best })
}

/// First step count whose ε exceeds `budget`, scanning upward.
pub fn abort_step_oracle(q: f64, sigma: f64, delta: f64, budget: f64, max_steps: u64) -> Option<u64> {
    let per: Vec<(f64, f64)> = oracle_orders()
        .into_iter()
        .map(|a| (rdp_quadrature(q, sigma, a), (1.0 / delta).ln() / (a as f64 - 1.0)))
        .collect();
    (0..=max_steps).find(|&t| {
        let eps = per.iter().map(|(r, c)| t as f64 * r + c).fold(f64::INFINITY, f64::min);
        eps > budget
    })
}

use privseg_tensor::rng::CounterRng;

use crate::error::{invalid, Error, Result};

pub fn l2_norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scales each gradient by `min(1, C/‖g‖₂)`. `C = ∞` leaves them unchanged.
pub fn clip_per_sample(grads: &[Vec<f64>], clip_norm: f64) -> Result<Vec<Vec<f64>>> {
    if !(clip_norm > 0.0) {
        return Err(invalid(format!("clip norm must be positive, got {clip_norm}")));
    }
    grads
        .iter()
        .enumerate()
        .map(|(i, g)| {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { sample: i });
            }
            let norm = l2_norm(g);
            if norm <= clip_norm {
                return Ok(g.clone());
            }
            let scale = clip_norm / norm;
            Ok(g.iter().map(|v| v * scale).collect())
        })
        .collect()
}

/// `(Σ g_i + N(0, σ²C² I)) / B`, summing in list order. Noise comes from
/// `rng` (Box–Muller over Philox); with `σ = 0` no draws are made.
pub fn noise_and_average(clipped: &[Vec<f64>], sigma: f64, clip_norm: f64, rng: &mut CounterRng) -> Result<Vec<f64>> {
    let first = clipped.first().ok_or_else(|| invalid("noise_and_average: empty batch"))?;
    if !(sigma >= 0.0) {
        return Err(invalid(format!("noise multiplier must be nonnegative, got {sigma}")));
    }
    let d = first.len();
    let mut sum = vec![0.0; d];
    for (i, g) in clipped.iter().enumerate() {
        if g.len() != d {
            return Err(invalid(format!("gradient {i} has length {}, expected {d}", g.len())));
        }
        for (s, v) in sum.iter_mut().zip(g) {
            *s += v;
        }
    }
    if sigma > 0.0 {
        let std = sigma * clip_norm;
        if !std.is_finite() {
            return Err(invalid("noise standard deviation sigma*C must be finite"));
        }
        for s in &mut sum {
            *s += std * rng.normal();
        }
    }
    let b = clipped.len() as f64;
    Ok(sum.into_iter().map(|s| s / b).collect())
}

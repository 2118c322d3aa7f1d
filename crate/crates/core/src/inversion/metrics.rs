use privseg_tensor::rng::{stream_id, CounterRng};
use privseg_tensor::Tensor;

use crate::error::{invalid, Result};

/// `(mse, psnr)` with `psnr = 10·log10(1/mse)` for a peak of 1, and
/// `f64::INFINITY` when the images are identical.
pub fn evaluate_reconstruction(recon: &Tensor, original: &Tensor) -> Result<(f64, f64)> {
    if recon.numel() != original.numel() {
        return Err(invalid(format!("shapes {:?} and {:?} differ", recon.shape(), original.shape())));
    }
    let mse = recon
        .data()
        .iter()
        .zip(original.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / recon.numel() as f64;
    let psnr = if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() };
    Ok((mse, psnr))
}

/// PSNR of `n` independent uniform-noise images against `original`.
pub fn random_baseline_psnr(original: &Tensor, n: usize, seed: u64) -> Result<Vec<f64>> {
    (0..n)
        .map(|k| {
            let mut rng = CounterRng::new(seed, stream_id(&[0xBA5E, k as u64]));
            let noise: Vec<f64> = (0..original.numel()).map(|_| rng.next_f64()).collect();
            Ok(evaluate_reconstruction(&Tensor::new(noise, original.shape())?, original)?.1)
        })
        .collect()
}

//! Binary 8-bit PGM (P5) output.

use std::fs;
use std::path::Path;

use crate::error::{invalid, Result};

/// `round(255·v)` per pixel, `v` clamped to `[0,1]`.
pub fn encode_pgm(values: &[f64], h: usize, w: usize) -> Result<Vec<u8>> {
    if values.len() != h * w {
        return Err(invalid(format!("PGM needs {h}x{w} values, got {}", values.len())));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| (255.0 * v.clamp(0.0, 1.0)).round() as u8));
    Ok(out)
}

pub fn write_pgm(path: &Path, values: &[f64], h: usize, w: usize) -> Result<()> {
    fs::write(path, encode_pgm(values, h, w)?)?;
    Ok(())
}

/// Panels of equal size side by side, separated by a 1-pixel black column.
pub fn side_by_side(panels: &[&[f64]], h: usize, w: usize) -> Result<(Vec<f64>, usize, usize)> {
    if panels.iter().any(|p| p.len() != h * w) {
        return Err(invalid("side_by_side: panel size mismatch"));
    }
    let total_w = panels.len() * w + panels.len().saturating_sub(1);
    let mut out = vec![0.0; h * total_w];
    for (k, p) in panels.iter().enumerate() {
        let x0 = k * (w + 1);
        for i in 0..h {
            out[i * total_w + x0..i * total_w + x0 + w].copy_from_slice(&p[i * w..(i + 1) * w]);
        }
    }
    Ok((out, h, total_w))
}

use std::f64::consts::PI;

use privseg_tensor::rng::{stream_id, CounterRng};
use privseg_tensor::Tensor;

use crate::error::{invalid, Result};

pub const MIN_SIZE: usize = 16;
pub const NOISE_STD: f64 = 0.05;

/// One 2-D slice: image `(1,H,W)` in `[0,1]` and binary mask `(1,H,W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSample {
    pub patient_id: u32,
    pub image: Tensor,
    pub mask: Tensor,
}

impl PhantomSample {
    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    /// Image and mask reshaped to `(1,1,H,W)` model inputs.
    pub fn as_batch(&self) -> Result<(Tensor, Tensor)> {
        let s = [1, 1, self.height(), self.width()];
        Ok((self.image.reshape(&s)?, self.mask.reshape(&s)?))
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.mask.data().iter().sum::<f64>() / self.mask.numel() as f64
    }
}

/// Ellipse and intensity parameters shared by all slices of one patient.
#[derive(Clone, Copy, Debug)]
struct Anatomy {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
    organ: f64,
    base: f64,
    grad_x: f64,
    grad_y: f64,
}

impl Anatomy {
    fn sample(rng: &mut CounterRng, h: usize, w: usize) -> Anatomy {
        let (hf, wf) = (h as f64, w as f64);
        Anatomy {
            cx: wf * rng.uniform(0.35, 0.65),
            cy: hf * rng.uniform(0.35, 0.65),
            a: wf * rng.uniform(0.16, 0.30),
            b: hf * rng.uniform(0.12, 0.26),
            theta: rng.uniform(0.0, PI),
            organ: rng.uniform(0.65, 0.85),
            base: rng.uniform(0.10, 0.20),
            grad_x: rng.uniform(-0.08, 0.08),
            grad_y: rng.uniform(-0.08, 0.08),
        }
    }

    /// Normalized elliptical radius of point `(x, y)`; `<= 1` is inside.
    fn radius(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.theta.sin_cos();
        let u = (c * dx + s * dy) / self.a;
        let v = (-s * dx + c * dy) / self.b;
        (u * u + v * v).sqrt()
    }
}

fn render(an: &Anatomy, rng: &mut CounterRng, patient_id: u32, h: usize, w: usize) -> Result<PhantomSample> {
    let (hf, wf) = (h as f64, w as f64);
    let n_blobs = 1 + rng.below(3) as usize;
    let mut blobs = Vec::with_capacity(n_blobs);
    while blobs.len() < n_blobs {
        let (bx, by) = (rng.uniform(0.0, wf), rng.uniform(0.0, hf));
        let amp = rng.uniform(0.15, 0.30);
        let sd = rng.uniform(1.2, 2.5);
        if an.radius(bx, by) > 1.4 {
            blobs.push((bx, by, amp, sd));
        }
    }
    // edge sharpness in units of the normalized radius, about one pixel wide
    let k = an.a.min(an.b);

    let mut image = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (x, y) = (j as f64 + 0.5, i as f64 + 0.5);
            let r = an.radius(x, y);
            let bg = an.base + an.grad_x * (x / wf - 0.5) * 2.0 + an.grad_y * (y / hf - 0.5) * 2.0;
            let blob: f64 = blobs
                .iter()
                .map(|&(bx, by, amp, sd)| amp * (-((x - bx).powi(2) + (y - by).powi(2)) / (2.0 * sd * sd)).exp())
                .sum();
            let inside = 1.0 / (1.0 + (-(1.0 - r) * k * 1.5).exp());
            let v = bg + blob + (an.organ - bg - blob) * inside + NOISE_STD * rng.normal();
            image.push(v.clamp(0.0, 1.0));
            mask.push(if r <= 1.0 { 1.0 } else { 0.0 });
        }
    }
    Ok(PhantomSample {
        patient_id,
        image: Tensor::new(image, &[1, h, w])?,
        mask: Tensor::new(mask, &[1, h, w])?,
    })
}

fn check_size(h: usize, w: usize) -> Result<()> {
    if h < MIN_SIZE || w < MIN_SIZE {
        return Err(invalid(format!("phantom size {h}x{w} is below the minimum {MIN_SIZE}x{MIN_SIZE}")));
    }
    Ok(())
}

/// A single phantom slice determined entirely by `patient_seed`.
/// `patient_id` is left at 0 for the caller to assign.
pub fn generate_phantom(patient_seed: u64, h: usize, w: usize) -> Result<PhantomSample> {
    check_size(h, w)?;
    let mut rng = CounterRng::new(patient_seed, stream_id(&[0x9A7, 0]));
    let an = Anatomy::sample(&mut rng, h, w);
    render(&an, &mut rng, 0, h, w)
}

/// `slices` slices of one patient: shared anatomy, organ size tapering away
/// from the middle slice, independent noise and distractors per slice.
pub fn generate_patient(patient_id: u32, patient_seed: u64, slices: usize, h: usize, w: usize) -> Result<Vec<PhantomSample>> {
    check_size(h, w)?;
    if slices == 0 {
        return Err(invalid("slices per patient must be positive"));
    }
    if slices == 1 {
        let mut s = generate_phantom(patient_seed, h, w)?;
        s.patient_id = patient_id;
        return Ok(vec![s]);
    }
    let mut rng = CounterRng::new(patient_seed, stream_id(&[0x9A7, 0]));
    let base = Anatomy::sample(&mut rng, h, w);
    let mid = (slices - 1) as f64 / 2.0;
    (0..slices)
        .map(|s| {
            let mut rng = CounterRng::new(patient_seed, stream_id(&[0x9A7, 1, s as u64]));
            let taper = 1.0 - 0.25 * ((s as f64 - mid) / mid.max(1.0)).abs();
            let an = Anatomy {
                a: base.a * taper,
                b: base.b * taper,
                cx: base.cx + rng.uniform(-0.5, 0.5),
                cy: base.cy + rng.uniform(-0.5, 0.5),
                ..base
            };
            render(&an, &mut rng, patient_id, h, w)
        })
        .collect()
}

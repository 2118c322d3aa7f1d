use privseg_tensor::rng::CounterRng;
use privseg_tensor::Tensor;

use super::phantom::PhantomSample;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    /// Pixels, per axis.
    pub max_translate: f64,
    /// Degrees.
    pub max_rotate: f64,
    pub scale_range: (f64, f64),
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            max_translate: 3.0,
            max_rotate: 15.0,
            scale_range: (0.9, 1.1),
        }
    }
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            max_translate: 0.0,
            max_rotate: 0.0,
            scale_range: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(self.max_translate >= 0.0) || !(self.max_rotate >= 0.0) || !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(invalid(format!("invalid augmentation parameters {self:?}")));
        }
        Ok(())
    }
}

/// Rotation by `angle` (radians) and isotropic `scale` about the image
/// center, followed by a translation of `(tx, ty)` pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub tx: f64,
    pub ty: f64,
    pub angle: f64,
    pub scale: f64,
}

impl Affine {
    pub fn translation(tx: f64, ty: f64) -> Self {
        Affine {
            tx,
            ty,
            angle: 0.0,
            scale: 1.0,
        }
    }

    /// Where input point `(x, y)` lands, for an image of `h × w` pixels
    /// (pixel centers at integer coordinates).
    pub fn apply(&self, (x, y): (f64, f64), h: usize, w: usize) -> (f64, f64) {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        (
            cx + self.scale * (c * dx - s * dy) + self.tx,
            cy + self.scale * (s * dx + c * dy) + self.ty,
        )
    }

    fn invert_point(&self, (x, y): (f64, f64), h: usize, w: usize) -> (f64, f64) {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = ((x - cx - self.tx) / self.scale, (y - cy - self.ty) / self.scale);
        (cx + c * dx + s * dy, cy - s * dx + c * dy)
    }
}

fn pixel(src: &[f64], h: usize, w: usize, i: isize, j: isize) -> f64 {
    if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
        0.0
    } else {
        src[i as usize * w + j as usize]
    }
}

/// Applies `t` to image (bilinear, zero fill) and mask (nearest, zero fill).
pub fn apply_affine(sample: &PhantomSample, t: &Affine) -> Result<PhantomSample> {
    let (h, w) = (sample.height(), sample.width());
    let (img, msk) = (sample.image.data(), sample.mask.data());
    let mut image = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (x, y) = t.invert_point((j as f64, i as f64), h, w);
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (xi, yi) = (x0 as isize, y0 as isize);
            let mut v = pixel(img, h, w, yi, xi) * (1.0 - fx) * (1.0 - fy);
            if fx > 0.0 {
                v += pixel(img, h, w, yi, xi + 1) * fx * (1.0 - fy);
            }
            if fy > 0.0 {
                v += pixel(img, h, w, yi + 1, xi) * (1.0 - fx) * fy;
            }
            if fx > 0.0 && fy > 0.0 {
                v += pixel(img, h, w, yi + 1, xi + 1) * fx * fy;
            }
            image.push(v.clamp(0.0, 1.0));
            let m = pixel(msk, h, w, y.round() as isize, x.round() as isize);
            mask.push(if m >= 0.5 { 1.0 } else { 0.0 });
        }
    }
    Ok(PhantomSample {
        patient_id: sample.patient_id,
        image: Tensor::new(image, sample.image.shape())?,
        mask: Tensor::new(mask, sample.mask.shape())?,
    })
}

/// Draws one random affine from `params` and applies it.
pub fn augment(sample: &PhantomSample, params: &AugmentParams, rng: &mut CounterRng) -> Result<PhantomSample> {
    params.validate()?;
    let t = Affine {
        tx: rng.uniform(-params.max_translate, params.max_translate),
        ty: rng.uniform(-params.max_translate, params.max_translate),
        angle: rng.uniform(-params.max_rotate, params.max_rotate).to_radians(),
        scale: rng.uniform(params.scale_range.0, params.scale_range.1),
    };
    apply_affine(sample, &t)
}

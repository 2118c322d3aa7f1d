//! 2-D convolution over NCHW tensors.
//!
//! A convolution `y = F(x, w)` is bilinear, and so are its two adjoints:
//! `Dx(gy, w)` (gradient w.r.t. the input, which is also the transposed
//! convolution) and `Dw(x, gy)` (gradient w.r.t. the kernel). All three
//! evaluate the same trilinear form `<F(x, w), gy>`, so each one's derivatives
//! are again expressible with the other two. That closure is what lets the
//! record differentiate a gradient that itself went through a convolution.

use crate::error::{mismatch, Result, TensorError};
use crate::tensor::{Op, Tensor};

/// Stride, symmetric zero padding, dilation and channel groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Conv2dConfig {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for Conv2dConfig {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }
}

impl Conv2dConfig {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding,
            ..Self::default()
        }
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        let ok = matches!(self.stride, 1 | 2) && matches!(self.dilation, 1 | 2 | 4) && self.groups >= 1;
        if !ok {
            return Err(TensorError::InvalidArgument {
                op,
                detail: format!("unsupported config {self:?} (stride in {{1,2}}, dilation in {{1,2,4}}, groups >= 1)"),
            });
        }
        Ok(())
    }

    /// Output extent for an input extent and kernel extent.
    pub fn output_size(&self, input: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum ConvMode {
    Forward,
    /// Adjoint w.r.t. the input.
    InputGrad,
    /// Adjoint w.r.t. the kernel.
    WeightGrad,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvOp {
    pub(crate) cfg: Conv2dConfig,
    pub(crate) mode: ConvMode,
}

impl ConvOp {
    pub(crate) fn name(&self) -> &'static str {
        match self.mode {
            ConvMode::Forward => "conv2d",
            ConvMode::InputGrad => "conv2d_input_grad",
            ConvMode::WeightGrad => "conv2d_weight_grad",
        }
    }
}

/// Dimensions of the forward convolution that all three modes share.
#[derive(Clone, Copy, Debug)]
struct Geom {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    cfg: Conv2dConfig,
}

impl Geom {
    fn cin_g(&self) -> usize {
        self.cin / self.cfg.groups
    }

    fn cout_g(&self) -> usize {
        self.cout / self.cfg.groups
    }

    fn build(op: &'static str, n: usize, cin: usize, (h, w): (usize, usize), cout: usize, (kh, kw): (usize, usize), cfg: Conv2dConfig) -> Result<Geom> {
        cfg.validate(op)?;
        if cin % cfg.groups != 0 || cout % cfg.groups != 0 {
            return Err(mismatch(op, format!("channels in={cin} out={cout} not divisible by groups={}", cfg.groups)));
        }
        let ho = cfg.output_size(h, kh);
        let wo = cfg.output_size(w, kw);
        match (ho, wo) {
            (Some(ho), Some(wo)) => Ok(Geom { n, cin, h, w, cout, kh, kw, ho, wo, cfg }),
            _ => Err(mismatch(op, format!("kernel {kh}x{kw} (dilation {}) exceeds padded input {h}x{w}", cfg.dilation))),
        }
    }

    /// Valid output positions `[lo, hi)` along one axis for kernel tap `k`.
    #[inline]
    fn range(&self, k: usize, input: usize, output: usize) -> (usize, usize) {
        let s = self.cfg.stride as isize;
        let off = (k * self.cfg.dilation) as isize - self.cfg.padding as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi = if input as isize - off <= 0 { 0 } else { (input as isize - off - 1) / s + 1 };
        let hi = hi.min(output as isize);
        (lo as usize, (hi.max(lo)) as usize)
    }

    #[inline]
    fn offset(&self, k: usize) -> isize {
        (k * self.cfg.dilation) as isize - self.cfg.padding as isize
    }
}

fn rank4(op: &'static str, t: &Tensor, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(mismatch(op, format!("{what} must be rank 4, got {:?}", t.shape()))),
    }
}

/// Visits every (output position, input position, kernel index) triple of the
/// convolution, grouped so that the innermost loop runs along output columns.
/// `f(x_base, y_base, w_index, ow_lo, ow_hi, x_col_offset)` handles one row.
#[inline]
fn for_each_row(g: &Geom, mut f: impl FnMut(usize, usize, usize, usize, usize, isize)) {
    let (cin_g, cout_g) = (g.cin_g(), g.cout_g());
    for n in 0..g.n {
        for grp in 0..g.cfg.groups {
            for ocl in 0..cout_g {
                let oc = grp * cout_g + ocl;
                let y_chan = (n * g.cout + oc) * g.ho * g.wo;
                for icl in 0..cin_g {
                    let ic = grp * cin_g + icl;
                    let x_chan = (n * g.cin + ic) * g.h * g.w;
                    for ky in 0..g.kh {
                        let (oh_lo, oh_hi) = g.range(ky, g.h, g.ho);
                        let offy = g.offset(ky);
                        for kx in 0..g.kw {
                            let (ow_lo, ow_hi) = g.range(kx, g.w, g.wo);
                            if ow_lo >= ow_hi {
                                continue;
                            }
                            let offx = g.offset(kx);
                            let widx = ((oc * cin_g + icl) * g.kh + ky) * g.kw + kx;
                            for oh in oh_lo..oh_hi {
                                let ih = (oh * g.cfg.stride) as isize + offy;
                                let x_row = x_chan + ih as usize * g.w;
                                let y_row = y_chan + oh * g.wo;
                                f(x_row, y_row, widx, ow_lo, ow_hi, offx);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn x_col(g: &Geom, ow: usize, offx: isize) -> usize {
    ((ow * g.cfg.stride) as isize + offx) as usize
}

fn forward_raw(g: &Geom, x: &[f64], w: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; g.n * g.cout * g.ho * g.wo];
    for_each_row(g, |xr, yr, wi, lo, hi, offx| {
        let wv = w[wi];
        if g.cfg.stride == 1 {
            let xs = &x[xr + x_col(g, lo, offx)..xr + x_col(g, hi - 1, offx) + 1];
            for (yv, &xv) in y[yr + lo..yr + hi].iter_mut().zip(xs) {
                *yv += wv * xv;
            }
        } else {
            for ow in lo..hi {
                y[yr + ow] += wv * x[xr + x_col(g, ow, offx)];
            }
        }
    });
    y
}

fn input_grad_raw(g: &Geom, gy: &[f64], w: &[f64]) -> Vec<f64> {
    let mut gx = vec![0.0; g.n * g.cin * g.h * g.w];
    for_each_row(g, |xr, yr, wi, lo, hi, offx| {
        let wv = w[wi];
        if g.cfg.stride == 1 {
            let start = xr + x_col(g, lo, offx);
            let xs = &mut gx[start..start + (hi - lo)];
            for (xv, &yv) in xs.iter_mut().zip(&gy[yr + lo..yr + hi]) {
                *xv += wv * yv;
            }
        } else {
            for ow in lo..hi {
                gx[xr + x_col(g, ow, offx)] += wv * gy[yr + ow];
            }
        }
    });
    gx
}

fn weight_grad_raw(g: &Geom, x: &[f64], gy: &[f64]) -> Vec<f64> {
    let mut gw = vec![0.0; g.cout * g.cin_g() * g.kh * g.kw];
    for_each_row(g, |xr, yr, wi, lo, hi, offx| {
        let acc: f64 = if g.cfg.stride == 1 {
            let xs = &x[xr + x_col(g, lo, offx)..xr + x_col(g, hi - 1, offx) + 1];
            xs.iter().zip(&gy[yr + lo..yr + hi]).map(|(a, b)| a * b).sum()
        } else {
            (lo..hi).map(|ow| x[xr + x_col(g, ow, offx)] * gy[yr + ow]).sum()
        };
        gw[wi] += acc;
    });
    gw
}

impl Tensor {
    /// Cross-correlation of `(N,Cin,H,W)` with a `(Cout,Cin/groups,kh,kw)` kernel.
    pub fn conv2d(&self, weight: &Tensor, cfg: Conv2dConfig) -> Result<Tensor> {
        const OP: &str = "conv2d";
        let [n, cin, h, w] = rank4(OP, self, "input")?;
        let [cout, cin_g, kh, kw] = rank4(OP, weight, "weight")?;
        if cin_g * cfg.groups != cin {
            return Err(mismatch(OP, format!("input has {cin} channels, weight expects {cin_g} x {} groups", cfg.groups)));
        }
        let g = Geom::build(OP, n, cin, (h, w), cout, (kh, kw), cfg)?;
        let y = forward_raw(&g, self.data(), weight.data());
        let op = Op::Conv(ConvOp { cfg, mode: ConvMode::Forward });
        Ok(Tensor::from_op(y, vec![n, cout, g.ho, g.wo], op, vec![self.clone(), weight.clone()]))
    }

    /// Convolution followed by per-channel bias.
    pub fn conv2d_bias(&self, weight: &Tensor, bias: &Tensor, cfg: Conv2dConfig) -> Result<Tensor> {
        self.conv2d(weight, cfg)?.add_channel_bias(bias)
    }

    /// Gradient of `conv2d` w.r.t. its input, i.e. the transposed convolution.
    /// `gy` is `(N,Cout,Ho,Wo)`, `weight` is `(Cout,Cin/groups,kh,kw)` and the
    /// result is `(N,Cin,h,w)`.
    pub fn conv2d_input_grad(gy: &Tensor, weight: &Tensor, (h, w): (usize, usize), cfg: Conv2dConfig) -> Result<Tensor> {
        const OP: &str = "conv2d_input_grad";
        let [n, cout, ho, wo] = rank4(OP, gy, "output gradient")?;
        let [wcout, cin_g, kh, kw] = rank4(OP, weight, "weight")?;
        if wcout != cout {
            return Err(mismatch(OP, format!("gradient has {cout} channels, weight has {wcout} outputs")));
        }
        let g = Geom::build(OP, n, cin_g * cfg.groups, (h, w), cout, (kh, kw), cfg)?;
        if (g.ho, g.wo) != (ho, wo) {
            return Err(mismatch(OP, format!("gradient spatial {ho}x{wo} does not match {}x{} for input {h}x{w}", g.ho, g.wo)));
        }
        let gx = input_grad_raw(&g, gy.data(), weight.data());
        let op = Op::Conv(ConvOp { cfg, mode: ConvMode::InputGrad });
        Ok(Tensor::from_op(gx, vec![n, g.cin, h, w], op, vec![gy.clone(), weight.clone()]))
    }

    /// Gradient of `conv2d` w.r.t. its kernel. Result is `(Cout,Cin/groups,kh,kw)`.
    pub fn conv2d_weight_grad(x: &Tensor, gy: &Tensor, (kh, kw): (usize, usize), cfg: Conv2dConfig) -> Result<Tensor> {
        const OP: &str = "conv2d_weight_grad";
        let [n, cin, h, w] = rank4(OP, x, "input")?;
        let [n2, cout, ho, wo] = rank4(OP, gy, "output gradient")?;
        if n != n2 {
            return Err(mismatch(OP, format!("batch {n} vs {n2}")));
        }
        let g = Geom::build(OP, n, cin, (h, w), cout, (kh, kw), cfg)?;
        if (g.ho, g.wo) != (ho, wo) {
            return Err(mismatch(OP, format!("gradient spatial {ho}x{wo} does not match {}x{}", g.ho, g.wo)));
        }
        let gw = weight_grad_raw(&g, x.data(), gy.data());
        let op = Op::Conv(ConvOp { cfg, mode: ConvMode::WeightGrad });
        Ok(Tensor::from_op(gw, vec![cout, g.cin_g(), kh, kw], op, vec![x.clone(), gy.clone()]))
    }

    /// Stride-2 transposed convolution with a `(Cin,Cout,2,2)` kernel: doubles
    /// the spatial size of an `(N,Cin,H,W)` input.
    pub fn conv_transpose2d(&self, weight: &Tensor) -> Result<Tensor> {
        const OP: &str = "transposed_conv2d";
        let [_, cin, h, w] = rank4(OP, self, "input")?;
        let [wcin, _, kh, kw] = rank4(OP, weight, "weight")?;
        if wcin != cin || (kh, kw) != (2, 2) {
            return Err(mismatch(OP, format!("input channels {cin}, weight {:?} (expects ({cin},Cout,2,2))", weight.shape())));
        }
        Tensor::conv2d_input_grad(self, weight, (2 * h, 2 * w), Conv2dConfig::new(2, 0))
    }
}

/// Derivatives of a conv-family output w.r.t. its two parents, given the
/// upstream gradient `g` (shaped like the output).
pub(crate) fn conv_backward(op: &ConvOp, parents: &[Tensor], g: &Tensor, want: [bool; 2]) -> Result<[Option<Tensor>; 2]> {
    let cfg = op.cfg;
    let (a, b) = (&parents[0], &parents[1]);
    let mut out = [None, None];
    match op.mode {
        ConvMode::Forward => {
            // a = x, b = w
            if want[0] {
                let (h, w) = (a.shape()[2], a.shape()[3]);
                out[0] = Some(Tensor::conv2d_input_grad(g, b, (h, w), cfg)?);
            }
            if want[1] {
                let (kh, kw) = (b.shape()[2], b.shape()[3]);
                out[1] = Some(Tensor::conv2d_weight_grad(a, g, (kh, kw), cfg)?);
            }
        }
        ConvMode::InputGrad => {
            // a = gy, b = w; output shaped like x
            if want[0] {
                out[0] = Some(g.conv2d(b, cfg)?);
            }
            if want[1] {
                let (kh, kw) = (b.shape()[2], b.shape()[3]);
                out[1] = Some(Tensor::conv2d_weight_grad(g, a, (kh, kw), cfg)?);
            }
        }
        ConvMode::WeightGrad => {
            // a = x, b = gy; output shaped like w
            if want[0] {
                let (h, w) = (a.shape()[2], a.shape()[3]);
                out[0] = Some(Tensor::conv2d_input_grad(b, g, (h, w), cfg)?);
            }
            if want[1] {
                out[1] = Some(a.conv2d(g, cfg)?);
            }
        }
    }
    Ok(out)
}

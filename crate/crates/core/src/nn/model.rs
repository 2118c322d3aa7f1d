//! Lite U-Net family.
//!
//! Encoder stage 0 keeps the input resolution; every further stage and the
//! bottleneck start with a stride-2 conv. Each decoder stage upsamples with a
//! 2×2 stride-2 transposed conv, concatenates the matching encoder output and
//! runs one block. Stage widths are `c, 2c, 2c, ...` (constant `c` for the
//! dilated style); the bottleneck keeps the width of the last stage.

use std::cell::Cell;

use privseg_tensor::rng::{stream_id, CounterRng};
use privseg_tensor::{no_grad, Conv2dConfig, Tensor};

use super::params::ParamSet;
use super::spec::{BackboneStyle, ModelSpec};
use crate::error::{invalid, Result};

pub const NORM_EPS: f64 = 1e-5;

/// Normalizes each `(sample, channel)` slice to zero mean and unit variance,
/// then applies a per-channel affine. No statistics are kept between calls.
pub fn instance_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(invalid(format!("instance_norm expects NCHW, got {:?}", x.shape())));
    }
    let (h, w) = (x.shape()[2], x.shape()[3]);
    if h * w < 2 {
        return Err(invalid(format!("instance_norm needs at least 2 spatial positions, got {h}x{w}")));
    }
    let inv_hw = 1.0 / (h * w) as f64;
    let mean = x.spatial_sum()?.mul_scalar(inv_hw);
    let xc = x.sub(&mean.spatial_broadcast(h, w)?)?;
    let var = xc.square().spatial_sum()?.mul_scalar(inv_hw);
    let inv_std = var.add_scalar(eps).powf(-0.5);
    let y = xc.mul(&inv_std.spatial_broadcast(h, w)?)?;
    Ok(y.mul_channel(gain)?.add_channel_bias(bias)?)
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: usize,
    b: Option<usize>,
    cfg: Conv2dConfig,
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gain: usize,
    bias: usize,
}

#[derive(Clone, Debug)]
enum Block {
    Plain {
        units: [(Conv, Norm); 2],
    },
    Residual {
        c1: (Conv, Norm),
        c2: (Conv, Norm),
        shortcut: Option<(Conv, Norm)>,
    },
    Inverted {
        units: Vec<InvertedUnit>,
    },
    Dilated {
        units: Vec<(Conv, Norm)>,
    },
}

#[derive(Clone, Copy, Debug)]
struct InvertedUnit {
    expand: (Conv, Norm),
    depthwise: (Conv, Norm),
    project: (Conv, Norm),
    residual: bool,
}

#[derive(Clone, Debug)]
struct Up {
    w: usize,
    b: usize,
}

#[derive(Clone, Debug)]
enum Arch {
    UNet {
        encoder: Vec<Block>,
        bottleneck: Block,
        decoder: Vec<(Up, Block)>,
        head: Conv,
    },
    SingleConv {
        conv: Conv,
        head: Conv,
    },
}

#[derive(Clone, Copy, Debug)]
enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    HeUniform { fan_in: usize },
    Zeros,
    Ones,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
    prefix: String,
}

impl Builder {
    fn param(&mut self, name: &str, shape: Vec<usize>, init: Init) -> usize {
        self.names.push(format!("{}{name}", self.prefix));
        self.shapes.push(shape);
        self.inits.push(init);
        self.names.len() - 1
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, cfg: Conv2dConfig, bias: bool) -> Conv {
        let cin_g = cin / cfg.groups;
        let w = self.param(&format!("{name}.weight"), vec![cout, cin_g, k, k], Init::HeUniform { fan_in: cin_g * k * k });
        let b = bias.then(|| self.param(&format!("{name}.bias"), vec![cout], Init::Zeros));
        Conv { w, b, cfg }
    }

    fn norm(&mut self, name: &str, c: usize) -> Norm {
        let gain = self.param(&format!("{name}.gain"), vec![c], Init::Ones);
        let bias = self.param(&format!("{name}.bias"), vec![c], Init::Zeros);
        Norm { gain, bias }
    }

    /// Conv without bias (the following norm has one) plus its norm.
    fn conv_norm(&mut self, name: &str, cin: usize, cout: usize, k: usize, cfg: Conv2dConfig) -> (Conv, Norm) {
        let c = self.conv(&format!("{name}.conv"), cin, cout, k, cfg, false);
        let n = self.norm(&format!("{name}.norm"), cout);
        (c, n)
    }

    fn block(&mut self, style: BackboneStyle, cin: usize, cout: usize, stride: usize) -> Block {
        let k3 = |dilation: usize| Conv2dConfig::new(stride, dilation).with_dilation(dilation);
        match style {
            BackboneStyle::Plain => Block::Plain {
                units: [
                    self.conv_norm("0", cin, cout, 3, k3(1)),
                    self.conv_norm("1", cout, cout, 3, Conv2dConfig::new(1, 1)),
                ],
            },
            BackboneStyle::Residual => {
                let c1 = self.conv_norm("0", cin, cout, 3, k3(1));
                let c2 = self.conv_norm("1", cout, cout, 3, Conv2dConfig::new(1, 1));
                let shortcut =
                    (cin != cout || stride != 1).then(|| self.conv_norm("shortcut", cin, cout, 1, Conv2dConfig::new(stride, 0)));
                Block::Residual { c1, c2, shortcut }
            }
            BackboneStyle::DepthwiseSeparable => {
                let mut units = Vec::new();
                for (i, (a, s)) in [(cin, stride), (cout, 1)].into_iter().enumerate() {
                    let hidden = 2 * a;
                    let p = format!("{i}");
                    units.push(InvertedUnit {
                        expand: self.conv_norm(&format!("{p}.expand"), a, hidden, 1, Conv2dConfig::new(1, 0)),
                        depthwise: self.conv_norm(
                            &format!("{p}.depthwise"),
                            hidden,
                            hidden,
                            3,
                            Conv2dConfig::new(s, 1).with_groups(hidden),
                        ),
                        project: self.conv_norm(&format!("{p}.project"), hidden, cout, 1, Conv2dConfig::new(1, 0)),
                        residual: a == cout && s == 1,
                    });
                }
                Block::Inverted { units }
            }
            BackboneStyle::Dilated => {
                let units = [(cin, k3(1)), (cout, Conv2dConfig::new(1, 2).with_dilation(2)), (cout, Conv2dConfig::new(1, 4).with_dilation(4))]
                    .into_iter()
                    .enumerate()
                    .map(|(i, (a, cfg))| self.conv_norm(&format!("{i}"), a, cout, 3, cfg))
                    .collect();
                Block::Dilated { units }
            }
            BackboneStyle::SingleConv => unreachable!("single-conv model has no blocks"),
        }
    }

    fn with_prefix<T>(&mut self, prefix: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let saved = std::mem::replace(&mut self.prefix, format!("{prefix}."));
        let out = f(self);
        self.prefix = saved;
        out
    }
}

/// Parameters plus the architecture that consumes them.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    arch: Arch,
    params: ParamSet,
}

/// Builds a model with deterministic initialization. Each parameter tensor
/// draws from its own RNG stream, keyed by its position.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut b = Builder {
        names: Vec::new(),
        shapes: Vec::new(),
        inits: Vec::new(),
        prefix: String::new(),
    };
    let c = spec.base_channels;
    let arch = match spec.backbone {
        BackboneStyle::SingleConv => {
            let k = spec.kernel_size;
            let conv = b.conv("features", spec.in_channels, c, k, Conv2dConfig::new(1, k / 2), true);
            let head = b.conv("head", c, spec.out_channels, 1, Conv2dConfig::default(), true);
            Arch::SingleConv { conv, head }
        }
        style => {
            let width = |i: usize| if style == BackboneStyle::Dilated || i == 0 { c } else { 2 * c };
            let mut encoder = Vec::new();
            let mut cin = spec.in_channels;
            for i in 0..spec.depth {
                let stride = if i == 0 { 1 } else { 2 };
                encoder.push(b.with_prefix(&format!("enc{i}"), |b| b.block(style, cin, width(i), stride)));
                cin = width(i);
            }
            let bottleneck = b.with_prefix("bottleneck", |b| b.block(style, cin, cin, 2));
            let mut decoder = Vec::new();
            for i in (0..spec.depth).rev() {
                let (prev, wi) = (cin, width(i));
                let up = b.with_prefix(&format!("dec{i}"), |b| Up {
                    w: b.param("up.weight", vec![prev, wi, 2, 2], Init::HeUniform { fan_in: prev }),
                    b: b.param("up.bias", vec![wi], Init::Zeros),
                });
                let block = b.with_prefix(&format!("dec{i}"), |b| b.block(style, 2 * wi, wi, 1));
                decoder.push((up, block));
                cin = wi;
            }
            let head = b.conv("head", cin, spec.out_channels, 1, Conv2dConfig::default(), true);
            Arch::UNet {
                encoder,
                bottleneck,
                decoder,
                head,
            }
        }
    };

    let mut entries = Vec::with_capacity(b.names.len());
    for (i, ((name, shape), init)) in b.names.into_iter().zip(b.shapes).zip(b.inits).enumerate() {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::HeUniform { fan_in } => {
                let bound = (6.0 / fan_in as f64).sqrt();
                let mut rng = CounterRng::new(seed, stream_id(&[0x1417, i as u64]));
                (0..n).map(|_| rng.uniform(-bound, bound)).collect()
            }
        };
        entries.push((name, Tensor::new(data, &shape)?));
    }
    Ok(Model {
        spec: spec.clone(),
        arch,
        params: ParamSet::new(entries)?,
    })
}

struct Ctx<'a> {
    p: &'a [Tensor],
    macs: Option<&'a Cell<u64>>,
    skip_only: bool,
}

impl Ctx<'_> {
    fn conv(&self, c: &Conv, x: &Tensor) -> Result<Tensor> {
        let w = &self.p[c.w];
        let y = x.conv2d(w, c.cfg)?;
        if let Some(m) = self.macs {
            let ws = w.shape();
            let ys = y.shape();
            m.set(m.get() + (ws[1] * ws[2] * ws[3] * ys[1] * ys[2] * ys[3]) as u64);
        }
        Ok(match c.b {
            Some(b) => y.add_channel_bias(&self.p[b])?,
            None => y,
        })
    }

    fn conv_norm(&self, (c, n): &(Conv, Norm), x: &Tensor) -> Result<Tensor> {
        instance_norm(&self.conv(c, x)?, &self.p[n.gain], &self.p[n.bias], NORM_EPS)
    }

    fn up(&self, u: &Up, x: &Tensor) -> Result<Tensor> {
        let w = &self.p[u.w];
        if let Some(m) = self.macs {
            let (xs, ws) = (x.shape(), w.shape());
            m.set(m.get() + (ws[0] * ws[1] * 4 * xs[2] * xs[3]) as u64);
        }
        Ok(x.conv_transpose2d(w)?.add_channel_bias(&self.p[u.b])?)
    }

    fn block(&self, block: &Block, x: &Tensor) -> Result<Tensor> {
        match block {
            Block::Plain { units } => {
                let y = self.conv_norm(&units[0], x)?.relu();
                Ok(self.conv_norm(&units[1], &y)?.relu())
            }
            Block::Residual { c1, c2, shortcut } => {
                let skip = match shortcut {
                    Some(s) => self.conv_norm(s, x)?,
                    None => x.clone(),
                };
                if self.skip_only {
                    return Ok(skip.relu());
                }
                let y = self.conv_norm(c1, x)?.relu();
                let y = self.conv_norm(c2, &y)?;
                Ok(y.add(&skip)?.relu())
            }
            Block::Inverted { units } => {
                let mut x = x.clone();
                for u in units {
                    let y = self.conv_norm(&u.expand, &x)?.relu();
                    let y = self.conv_norm(&u.depthwise, &y)?.relu();
                    let y = self.conv_norm(&u.project, &y)?;
                    x = if u.residual { y.add(&x)? } else { y };
                }
                Ok(x)
            }
            Block::Dilated { units } => {
                let mut x = x.clone();
                for u in units {
                    x = self.conv_norm(u, &x)?.relu();
                }
                Ok(x)
            }
        }
    }

    fn forward(&self, arch: &Arch, x: &Tensor) -> Result<Tensor> {
        match arch {
            Arch::SingleConv { conv, head } => self.conv(head, &self.conv(conv, x)?.relu()),
            Arch::UNet {
                encoder,
                bottleneck,
                decoder,
                head,
            } => {
                let mut skips = Vec::with_capacity(encoder.len());
                let mut h = x.clone();
                for block in encoder {
                    h = self.block(block, &h)?;
                    skips.push(h.clone());
                }
                h = self.block(bottleneck, &h)?;
                for (up, block) in decoder {
                    let skip = skips.pop().expect("one skip per decoder stage");
                    let u = self.up(up, &h)?;
                    h = self.block(block, &Tensor::concat(&[u, skip], 1)?)?;
                }
                self.conv(head, &h)
            }
        }
    }
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Parameters as initialized.
    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// Logits `(N,1,H,W)` for input `(N,1,H,W)` under the given parameters.
    pub fn forward(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        self.check_params(params)?;
        self.forward_tensors(&params.tensors(), x)
    }

    /// Like [`forward`](Self::forward) with parameters given positionally,
    /// e.g. as leaves that require grad.
    pub fn forward_tensors(&self, params: &[Tensor], x: &Tensor) -> Result<Tensor> {
        self.run(params, x, None, false)
    }

    fn run(&self, params: &[Tensor], x: &Tensor, macs: Option<&Cell<u64>>, skip_only: bool) -> Result<Tensor> {
        if params.len() != self.params.len() {
            return Err(invalid(format!("model expects {} parameter tensors, got {}", self.params.len(), params.len())));
        }
        self.check_input(x)?;
        Ctx { p: params, macs, skip_only }.forward(&self.arch, x)
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        self.params.check_layout(params, "model parameters")
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.spec.in_channels {
            return Err(invalid(format!("model input must be (N,{},H,W), got {s:?}", self.spec.in_channels)));
        }
        let m = self.spec.size_multiple();
        if s[2] % m != 0 || s[3] % m != 0 {
            return Err(invalid(format!(
                "input spatial size {}x{} is not divisible by 2^depth = {m}",
                s[2], s[3]
            )));
        }
        Ok(())
    }

    /// Forward in which every residual block returns `relu(shortcut(x))`.
    #[doc(hidden)]
    pub fn forward_skip_only(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        self.check_params(params)?;
        self.run(&params.tensors(), x, None, true)
    }
}

pub fn count_params(model: &Model) -> usize {
    model.params.numel()
}

/// Multiply-accumulates of one forward pass on a single `(C,H,W)` or
/// `(1,C,H,W)` input. Each conv contributes `k²·Cin/groups·Cout·Ho·Wo`; the
/// transposed conv contributes `4·Cin·Cout·H·W` (every input pixel scatters
/// into a 2×2 patch).
pub fn count_macs(model: &Model, input_shape: &[usize]) -> Result<u64> {
    let shape = match input_shape {
        [c, h, w] => vec![1, *c, *h, *w],
        [1, c, h, w] => vec![1, *c, *h, *w],
        other => return Err(invalid(format!("count_macs expects (C,H,W) or (1,C,H,W), got {other:?}"))),
    };
    let _g = no_grad();
    let macs = Cell::new(0);
    model.run(&model.params.tensors(), &Tensor::zeros(&shape)?, Some(&macs), false)?;
    Ok(macs.get())
}

//! Forward definitions of the non-convolution primitives.

use crate::error::{mismatch, Result, TensorError};
use crate::tensor::{check_shape, Op, Tensor};

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn require_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(mismatch(op, format!("expected rank {rank}, got shape {:?}", t.shape())));
    }
    Ok(())
}

impl Tensor {
    fn broadcast_pair(&self, other: &Tensor, op: &'static str) -> Result<(Tensor, Tensor)> {
        if self.shape() == other.shape() {
            Ok((self.clone(), other.clone()))
        } else if other.numel() == 1 {
            Ok((self.clone(), other.expand(self.shape())?))
        } else if self.numel() == 1 {
            Ok((self.expand(other.shape())?, other.clone()))
        } else {
            Err(mismatch(
                op,
                format!("{:?} vs {:?} (only scalar broadcasting is supported)", self.shape(), other.shape()),
            ))
        }
    }

    fn binary(&self, other: &Tensor, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (a, b) = self.broadcast_pair(other, op.name())?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = a.shape().to_vec();
        Ok(Tensor::from_op(data, shape, op, vec![a, b]))
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.data().iter().map(|&x| f(x)).collect();
        Tensor::from_op(data, self.shape().to_vec(), op, vec![self.clone()])
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Add, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Sub, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Mul, |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Div, |a, b| a / b)
    }

    pub fn neg(&self) -> Tensor {
        self.unary(Op::Neg, |x| -x)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary(Op::AddScalar, |x| x + c)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        self.unary(Op::MulScalar(c), |x| x * c)
    }

    /// Elementwise `x^p` for a constant exponent.
    pub fn powf(&self, p: f64) -> Tensor {
        self.unary(Op::Powf(p), |x| x.powf(p))
    }

    pub fn square(&self) -> Tensor {
        self.powf(2.0)
    }

    pub fn sqrt(&self) -> Tensor {
        self.powf(0.5)
    }

    pub fn exp(&self) -> Tensor {
        self.unary(Op::Exp, f64::exp)
    }

    pub fn log(&self) -> Tensor {
        self.unary(Op::Log, f64::ln)
    }

    pub fn relu(&self) -> Tensor {
        self.unary(Op::Relu, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(Op::Sigmoid, sigmoid)
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        Tensor::from_op(vec![s], vec![1], Op::Sum, vec![self.clone()])
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        Tensor::from_op(vec![s / self.numel() as f64], vec![1], Op::Mean, vec![self.clone()])
    }

    /// Inner product of two same-shaped tensors, shape `[1]`.
    pub fn dot(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(mismatch("dot", format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(self.mul(other)?.sum())
    }

    /// Broadcasts a single-element tensor to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor> {
        if self.numel() != 1 {
            return Err(mismatch("expand", format!("source must have one element, got {:?}", self.shape())));
        }
        let n = check_shape(shape)?;
        Ok(Tensor::from_op(vec![self.data()[0]; n], shape.to_vec(), Op::Expand, vec![self.clone()]))
    }

    /// `(m,k) x (k,n) -> (m,n)`
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        require_rank("matmul", self, 2)?;
        require_rank("matmul", other, 2)?;
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (other.shape()[0], other.shape()[1]);
        if k != k2 {
            return Err(mismatch("matmul", format!("inner dimensions {k} and {k2} differ")));
        }
        let a = self.data();
        let b = other.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
        Ok(Tensor::from_op(out, vec![m, n], Op::MatMul, vec![self.clone(), other.clone()]))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        require_rank("transpose", self, 2)?;
        let (m, n) = (self.shape()[0], self.shape()[1]);
        let a = self.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = a[i * n + j];
            }
        }
        Ok(Tensor::from_op(out, vec![n, m], Op::Transpose, vec![self.clone()]))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n = check_shape(shape)?;
        if n != self.numel() {
            return Err(mismatch("reshape", format!("{:?} has {} elements, target {:?} has {n}", self.shape(), self.numel(), shape)));
        }
        Ok(Tensor::from_op(self.to_vec(), shape.to_vec(), Op::Reshape, vec![self.clone()]))
    }

    /// Flattens to rank 1.
    pub fn flatten(&self) -> Result<Tensor> {
        self.reshape(&[self.numel()])
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::InvalidArgument { op: "concat", detail: "no inputs".into() })?;
        if axis >= first.rank() {
            return Err(mismatch("concat", format!("axis {axis} out of range for rank {}", first.rank())));
        }
        for p in &parts[1..] {
            let same_rank = p.rank() == first.rank();
            let agree = same_rank
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !agree {
                return Err(mismatch("concat", format!("{:?} vs {:?} along axis {axis}", first.shape(), p.shape())));
            }
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(first.shape(), axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&sizes) {
                out.extend_from_slice(&p.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        Ok(Tensor::from_op(out, shape, Op::Concat { axis, sizes }, parts.to_vec()))
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || len == 0 || start + len > self.shape()[axis] {
            return Err(mismatch("slice", format!("range {start}..{} on axis {axis} of {:?}", start + len, self.shape())));
        }
        let (outer, ext, inner) = axis_split(self.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * ext + start) * inner;
            out.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::from_op(out, shape, Op::Slice { axis, start }, vec![self.clone()]))
    }

    /// Zero padding along `axis`.
    pub fn pad(&self, axis: usize, before: usize, after: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(mismatch("pad", format!("axis {axis} out of range for {:?}", self.shape())));
        }
        let (outer, ext, inner) = axis_split(self.shape(), axis);
        let new_ext = ext + before + after;
        let mut out = vec![0.0; outer * new_ext * inner];
        for o in 0..outer {
            let src = &self.data()[o * ext * inner..(o + 1) * ext * inner];
            let dst = (o * new_ext + before) * inner;
            out[dst..dst + ext * inner].copy_from_slice(src);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = new_ext;
        Ok(Tensor::from_op(out, shape, Op::Pad { axis, before }, vec![self.clone()]))
    }

    /// Symmetric zero padding of both spatial axes of an NCHW tensor.
    pub fn pad_spatial(&self, p: usize) -> Result<Tensor> {
        require_rank("pad", self, 4)?;
        self.pad(2, p, p)?.pad(3, p, p)
    }

    /// `(N,C,H,W) -> [C]`
    pub fn channel_sum(&self) -> Result<Tensor> {
        require_rank("channel_sum", self, 4)?;
        let (n, c, hw) = (self.shape()[0], self.shape()[1], self.shape()[2] * self.shape()[3]);
        let mut out = vec![0.0; c];
        for s in 0..n {
            for (ch, o) in out.iter_mut().enumerate() {
                let base = (s * c + ch) * hw;
                *o += self.data()[base..base + hw].iter().sum::<f64>();
            }
        }
        Ok(Tensor::from_op(out, vec![c], Op::ChannelSum, vec![self.clone()]))
    }

    /// `[C] -> shape` where `shape` is NCHW with matching `C`.
    pub fn channel_broadcast(&self, shape: &[usize]) -> Result<Tensor> {
        if self.rank() != 1 || shape.len() != 4 || shape[1] != self.numel() {
            return Err(mismatch("channel_broadcast", format!("{:?} onto {:?}", self.shape(), shape)));
        }
        check_shape(shape)?;
        let (n, c, hw) = (shape[0], shape[1], shape[2] * shape[3]);
        let mut out = Vec::with_capacity(n * c * hw);
        for _ in 0..n {
            for &v in self.data() {
                out.extend(std::iter::repeat(v).take(hw));
            }
        }
        Ok(Tensor::from_op(out, shape.to_vec(), Op::ChannelBroadcast, vec![self.clone()]))
    }

    /// `(N,C,H,W) -> [N,C]`, summing each spatial slice.
    pub fn spatial_sum(&self) -> Result<Tensor> {
        require_rank("spatial_sum", self, 4)?;
        let (n, c, hw) = (self.shape()[0], self.shape()[1], self.shape()[2] * self.shape()[3]);
        let out = self.data().chunks(hw).map(|s| s.iter().sum()).collect();
        Ok(Tensor::from_op(out, vec![n, c], Op::SpatialSum, vec![self.clone()]))
    }

    /// `[N,C] -> (N,C,h,w)`, repeating each value over its spatial slice.
    pub fn spatial_broadcast(&self, h: usize, w: usize) -> Result<Tensor> {
        require_rank("spatial_broadcast", self, 2)?;
        let shape = vec![self.shape()[0], self.shape()[1], h, w];
        check_shape(&shape)?;
        let mut out = Vec::with_capacity(self.numel() * h * w);
        for &v in self.data() {
            out.extend(std::iter::repeat(v).take(h * w));
        }
        Ok(Tensor::from_op(out, shape, Op::SpatialBroadcast, vec![self.clone()]))
    }

    /// Per-channel bias addition, `bias` of shape `[C]`.
    pub fn add_channel_bias(&self, bias: &Tensor) -> Result<Tensor> {
        self.add(&bias.channel_broadcast(self.shape())?)
    }

    /// Per-channel scaling, `gain` of shape `[C]`.
    pub fn mul_channel(&self, gain: &Tensor) -> Result<Tensor> {
        self.mul(&gain.channel_broadcast(self.shape())?)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use crate::conv::ConvOp;
use crate::error::{Result, TensorError};

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Restores the previous recording mode when dropped.
#[must_use = "recording mode reverts when the guard is dropped"]
pub struct GradModeGuard {
    prev: bool,
}

impl Drop for GradModeGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

/// Sets whether ops on this thread record their inputs for differentiation.
pub fn set_grad_enabled(enabled: bool) -> GradModeGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(enabled));
    GradModeGuard { prev }
}

/// Disables recording on this thread until the guard is dropped.
pub fn no_grad() -> GradModeGuard {
    set_grad_enabled(false)
}

/// The primitive that produced a recorded tensor.
#[derive(Clone, Debug)]
pub(crate) enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddScalar,
    MulScalar(f64),
    Powf(f64),
    Exp,
    Log,
    Relu,
    Sigmoid,
    Sum,
    Mean,
    /// `[1]` to any shape.
    Expand,
    MatMul,
    Transpose,
    Reshape,
    Concat { axis: usize, sizes: Vec<usize> },
    Slice { axis: usize, start: usize },
    Pad { axis: usize, before: usize },
    /// `(N,C,H,W) -> [C]`
    ChannelSum,
    /// `[C] -> (N,C,H,W)`
    ChannelBroadcast,
    /// `(N,C,H,W) -> [N,C]`
    SpatialSum,
    /// `[N,C] -> (N,C,H,W)`
    SpatialBroadcast,
    Conv(ConvOp),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::AddScalar => "add_scalar",
            Op::MulScalar(_) => "mul_scalar",
            Op::Powf(_) => "powf",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Expand => "expand",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Reshape => "reshape",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Pad { .. } => "pad",
            Op::ChannelSum => "channel_sum",
            Op::ChannelBroadcast => "channel_broadcast",
            Op::SpatialSum => "spatial_sum",
            Op::SpatialBroadcast => "spatial_broadcast",
            Op::Conv(c) => c.name(),
        }
    }
}

pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) parents: Vec<Tensor>,
}

pub(crate) struct Inner {
    pub(crate) data: Vec<f64>,
    pub(crate) shape: Vec<usize>,
    pub(crate) requires_grad: bool,
    pub(crate) node: Option<Node>,
}

/// Immutable dense row-major `f64` tensor.
///
/// Cloning is cheap (reference counted). A tensor that requires grad either
/// is a leaf or carries the op and parents that produced it; the chain of
/// parents is the differentiation record walked by [`crate::backward`].
#[derive(Clone)]
pub struct Tensor(pub(crate) Arc<Inner>);

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(TensorError::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be positive and rank at least 1".into(),
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// Untracked tensor from row-major data.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(TensorError::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("expects {n} elements, got {}", data.len()),
            });
        }
        Ok(Tensor::raw(data, shape.to_vec()))
    }

    pub(crate) fn raw(data: Vec<f64>, shape: Vec<usize>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Arc::new(Inner {
            data,
            shape,
            requires_grad: false,
            node: None,
        }))
    }

    /// Leaf tensor that gradients can be taken with respect to.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::new(data, shape)?.requires_grad())
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::raw(vec![v], vec![1])
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        let n = check_shape(shape)?;
        Ok(Tensor::raw(vec![0.0; n], shape.to_vec()))
    }

    pub fn ones(shape: &[usize]) -> Result<Tensor> {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Result<Tensor> {
        let n = check_shape(shape)?;
        Ok(Tensor::raw(vec![v; n], shape.to_vec()))
    }

    /// New leaf with the same values that requires grad.
    pub fn requires_grad(&self) -> Tensor {
        Tensor(Arc::new(Inner {
            data: self.0.data.clone(),
            shape: self.0.shape.clone(),
            requires_grad: true,
            node: None,
        }))
    }

    /// Same values, cut from any record.
    pub fn detach(&self) -> Tensor {
        Tensor::raw(self.0.data.clone(), self.0.shape.clone())
    }

    /// Records `op` if recording is on and any parent requires grad.
    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, op: Op, parents: Vec<Tensor>) -> Tensor {
        let track = grad_enabled() && parents.iter().any(Tensor::is_tracked);
        Tensor(Arc::new(Inner {
            data,
            shape,
            requires_grad: track,
            node: if track { Some(Node { op, parents }) } else { None },
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    /// Whether this tensor participates in a differentiation record.
    pub fn is_tracked(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        Ok(self.0.data[0])
    }

    pub(crate) fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    /// Name of the op that produced this tensor, if recorded.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.op.name())
    }

    /// Same data, different shape; untracked result. Handy for building inputs.
    pub fn with_shape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(self.to_vec(), shape)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("tracked", &self.is_tracked())
            .field("op", &self.op_name())
            .field("data", &preview)
            .finish()
    }
}

impl PartialEq for Tensor {
    /// Value equality: same shape and bitwise-equal elements.
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self
                .data()
                .iter()
                .zip(other.data())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

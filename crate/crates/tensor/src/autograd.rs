//! Reverse-mode traversal of the differentiation record.
//!
//! Every backward rule is written with the same differentiable primitives as
//! the forward pass. With `build_graph = true` the gradients returned by
//! [`backward`] are therefore recorded tensors themselves and can be fed into
//! a second `backward` (gradient of a function of gradients).

use std::collections::{HashMap, HashSet};

use crate::conv::conv_backward;
use crate::error::{Result, TensorError};
use crate::tensor::{set_grad_enabled, Op, Tensor};

/// Gradients of a single-element `scalar` w.r.t. each tensor of `wrt`.
///
/// The record is not modified, so calling this twice gives identical results.
pub fn backward(scalar: &Tensor, wrt: &[Tensor], build_graph: bool) -> Result<Vec<Tensor>> {
    if scalar.numel() != 1 {
        return Err(TensorError::NotScalar(scalar.shape().to_vec()));
    }
    let _mode = set_grad_enabled(build_graph);

    let order = topo_order(scalar);
    let keep: HashSet<usize> = wrt.iter().map(Tensor::id).collect();
    let mut grads: HashMap<usize, Tensor> = HashMap::new();
    if scalar.is_tracked() {
        grads.insert(scalar.id(), Tensor::ones(scalar.shape())?);
    }
    let mut finished: HashMap<usize, Tensor> = HashMap::new();

    for t in order.iter().rev() {
        let Some(g) = grads.remove(&t.id()) else { continue };
        if let Some(node) = &t.0.node {
            let want: Vec<bool> = node.parents.iter().map(Tensor::is_tracked).collect();
            let pgrads = node_backward(&node.op, &node.parents, t, &g, &want)?;
            for ((p, pg), w) in node.parents.iter().zip(pgrads).zip(want) {
                if !w {
                    continue;
                }
                let Some(pg) = pg else { continue };
                match grads.remove(&p.id()) {
                    Some(acc) => grads.insert(p.id(), acc.add(&pg)?),
                    None => grads.insert(p.id(), pg),
                };
            }
        }
        if keep.contains(&t.id()) {
            finished.insert(t.id(), g);
        }
    }

    wrt.iter()
        .enumerate()
        .map(|(i, w)| finished.get(&w.id()).cloned().ok_or(TensorError::NotOnRecord(i)))
        .collect()
}

/// Post-order over tracked tensors reachable from `root`; parents precede children.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    if !root.is_tracked() {
        return order;
    }
    let mut seen: HashSet<usize> = HashSet::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !seen.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        if let Some(node) = &t.0.node {
            for p in node.parents.iter().rev() {
                if p.is_tracked() && !seen.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }
    }
    order
}

fn node_backward(op: &Op, parents: &[Tensor], out: &Tensor, g: &Tensor, want: &[bool]) -> Result<Vec<Option<Tensor>>> {
    let p0 = &parents[0];
    let one = |t: Tensor| Ok(vec![Some(t)]);
    match op {
        Op::Add => Ok(vec![Some(g.clone()), Some(g.clone())]),
        Op::Sub => Ok(vec![Some(g.clone()), Some(g.neg())]),
        Op::Mul => {
            let ga = if want[0] { Some(g.mul(&parents[1])?) } else { None };
            let gb = if want[1] { Some(g.mul(p0)?) } else { None };
            Ok(vec![ga, gb])
        }
        Op::Div => {
            let b = &parents[1];
            let ga = if want[0] { Some(g.div(b)?) } else { None };
            // d(a/b)/db = -(a/b)/b
            let gb = if want[1] { Some(g.mul(out)?.div(b)?.neg()) } else { None };
            Ok(vec![ga, gb])
        }
        Op::Neg => one(g.neg()),
        Op::AddScalar => one(g.clone()),
        Op::MulScalar(c) => one(g.mul_scalar(*c)),
        Op::Powf(p) => one(g.mul(&p0.powf(p - 1.0).mul_scalar(*p))?),
        Op::Exp => one(g.mul(out)?),
        Op::Log => one(g.div(p0)?),
        Op::Relu => {
            let mask: Vec<f64> = p0.data().iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
            one(g.mul(&Tensor::raw(mask, p0.shape().to_vec()))?)
        }
        Op::Sigmoid => {
            // s (1 - s), expressed through the recorded output
            let ds = out.mul(&out.neg().add_scalar(1.0))?;
            one(g.mul(&ds)?)
        }
        Op::Sum => one(g.expand(p0.shape())?),
        Op::Mean => one(g.mul_scalar(1.0 / p0.numel() as f64).expand(p0.shape())?),
        Op::Expand => one(g.sum().reshape(p0.shape())?),
        Op::MatMul => {
            let b = &parents[1];
            let ga = if want[0] { Some(g.matmul(&b.transpose()?)?) } else { None };
            let gb = if want[1] { Some(p0.transpose()?.matmul(g)?) } else { None };
            Ok(vec![ga, gb])
        }
        Op::Transpose => one(g.transpose()?),
        Op::Reshape => one(g.reshape(p0.shape())?),
        Op::Concat { axis, sizes } => {
            let mut start = 0;
            let mut res = Vec::with_capacity(sizes.len());
            for (&len, &w) in sizes.iter().zip(want) {
                res.push(if w { Some(g.slice(*axis, start, len)?) } else { None });
                start += len;
            }
            Ok(res)
        }
        Op::Slice { axis, start } => {
            let full = p0.shape()[*axis];
            let len = out.shape()[*axis];
            one(g.pad(*axis, *start, full - start - len)?)
        }
        Op::Pad { axis, before } => one(g.slice(*axis, *before, p0.shape()[*axis])?),
        Op::ChannelSum => one(g.channel_broadcast(p0.shape())?),
        Op::ChannelBroadcast => one(g.channel_sum()?),
        Op::SpatialSum => one(g.spatial_broadcast(p0.shape()[2], p0.shape()[3])?),
        Op::SpatialBroadcast => one(g.spatial_sum()?),
        Op::Conv(c) => {
            let [a, b] = conv_backward(c, parents, g, [want[0], want[1]])?;
            Ok(vec![a, b])
        }
    }
}

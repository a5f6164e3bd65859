use std::borrow::Cow;

use super::kernels::{self, ConvGeometry, GroupNormContext};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Conv2d { input: NodeId, kernel: NodeId, bias: NodeId, geometry: ConvGeometry },
    GroupNorm { input: NodeId, gamma: NodeId, beta: NodeId, ctx: GroupNormContext },
    Relu { input: NodeId },
    MaxPool { input: NodeId, argmax: Vec<u32> },
    Flatten { input: NodeId },
    Linear { input: NodeId, weight: NodeId, bias: NodeId },
    CrossEntropy { logits: NodeId, labels: Vec<usize>, probs: Vec<f32> },
    WeightedSum { input: NodeId, weights: Tensor },
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
    /// Full-precision value of scalar reductions.
    scalar: Option<f64>,
}

/// Append-only tape of operations. Nodes are stored in creation order, which
/// is a topological order; [`Graph::backward`] walks it in reverse.
///
/// Parameters enter as borrowed leaves so that a forward pass never copies
/// weights out of their owning parameter set.
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    record: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), record: true }
    }

    /// A tape that keeps no backward context. [`Graph::backward`] fails on it.
    pub fn inference() -> Self {
        Graph { nodes: Vec::new(), record: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op, requires_grad: bool, scalar: Option<f64>) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad, scalar });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node<'p> {
        &self.nodes[id.0]
    }

    fn grad_flag(&self, ids: &[NodeId]) -> bool {
        self.record && ids.iter().any(|&id| self.node(id).requires_grad)
    }

    /// A trainable leaf borrowed from a parameter set.
    pub fn param(&mut self, tensor: &'p Tensor) -> NodeId {
        let rg = self.record;
        self.push(Cow::Borrowed(tensor), Op::Leaf, rg, None)
    }

    /// A leaf that receives no gradient (input data).
    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        self.push(Cow::Owned(tensor), Op::Leaf, false, None)
    }

    /// A leaf that receives a gradient but is owned by the tape.
    pub fn variable(&mut self, tensor: Tensor) -> NodeId {
        let rg = self.record;
        self.push(Cow::Owned(tensor), Op::Leaf, rg, None)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.node(id).value
    }

    /// The `f64` value of a scalar reduction node (loss or weighted sum).
    pub fn scalar(&self, id: NodeId) -> Option<f64> {
        self.node(id).scalar
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, bias: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let (out, geometry) =
            kernels::conv2d_forward(self.value(input), self.value(kernel), self.value(bias), stride, pad)?;
        out.ensure_finite("conv2d")?;
        let rg = self.grad_flag(&[input, kernel, bias]);
        Ok(self.push(Cow::Owned(out), Op::Conv2d { input, kernel, bias, geometry }, rg, None))
    }

    pub fn group_norm(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        eps: f64,
    ) -> Result<NodeId> {
        let (out, ctx) =
            kernels::group_norm_forward(self.value(input), self.value(gamma), self.value(beta), groups, eps)?;
        out.ensure_finite("group_norm")?;
        let rg = self.grad_flag(&[input, gamma, beta]);
        let ctx = if rg { ctx } else { GroupNormContext { groups, normalized: Vec::new(), rstd: Vec::new() } };
        Ok(self.push(Cow::Owned(out), Op::GroupNorm { input, gamma, beta, ctx }, rg, None))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let out = kernels::relu_forward(self.value(input));
        let rg = self.grad_flag(&[input]);
        Ok(self.push(Cow::Owned(out), Op::Relu { input }, rg, None))
    }

    pub fn max_pool2d(&mut self, input: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let (out, argmax) = kernels::max_pool2d_forward(self.value(input), window, stride)?;
        let rg = self.grad_flag(&[input]);
        let argmax = if rg { argmax } else { Vec::new() };
        Ok(self.push(Cow::Owned(out), Op::MaxPool { input, argmax }, rg, None))
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        let v = self.value(input);
        let n = *v.shape().first().ok_or_else(|| Error::shape("cannot flatten a rank-0 tensor"))?;
        let d = v.len().checked_div(n).unwrap_or_else(|| v.shape()[1..].iter().product());
        let out = v.clone().reshape(vec![n, d])?;
        let rg = self.grad_flag(&[input]);
        Ok(self.push(Cow::Owned(out), Op::Flatten { input }, rg, None))
    }

    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let out = kernels::linear_forward(self.value(input), self.value(weight), self.value(bias))?;
        out.ensure_finite("linear")?;
        let rg = self.grad_flag(&[input, weight, bias]);
        Ok(self.push(Cow::Owned(out), Op::Linear { input, weight, bias }, rg, None))
    }

    /// Mean cross-entropy of `softmax(logits)` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let (loss, probs) = kernels::softmax_cross_entropy_forward(self.value(logits), labels)?;
        if !loss.is_finite() {
            return Err(Error::numerics("cross-entropy loss is not finite"));
        }
        let rg = self.grad_flag(&[logits]);
        let probs = if rg { probs } else { Vec::new() };
        let op = Op::CrossEntropy { logits, labels: labels.to_vec(), probs };
        Ok(self.push(Cow::Owned(Tensor::scalar(loss as f32)), op, rg, Some(loss)))
    }

    /// Scalar `sum_i weights[i] * input[i]`, accumulated in `f64`.
    pub fn weighted_sum(&mut self, input: NodeId, weights: Tensor) -> Result<NodeId> {
        self.value(input).check_same_shape(&weights)?;
        let s: f64 = self.value(input).data().iter().zip(weights.data()).map(|(&x, &w)| x as f64 * w as f64).sum();
        let rg = self.grad_flag(&[input]);
        Ok(self.push(Cow::Owned(Tensor::scalar(s as f32)), Op::WeightedSum { input, weights }, rg, Some(s)))
    }

    /// Plain sum of all elements.
    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        let ones = Tensor::full(self.value(input).shape(), 1.0);
        self.weighted_sum(input, ones)
    }

    /// Reverse-mode sweep from a scalar node. Returns gradients for every node
    /// that requires one; gradient shapes equal their primal shapes.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.record {
            return Err(Error::config("backward called on an inference graph"));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.node(loss).requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let send = |id: NodeId, g: Tensor, grads: &mut Vec<Option<Tensor>>| -> Result<()> {
                if !self.node(id).requires_grad {
                    return Ok(());
                }
                match &mut grads[id.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => {
                        *slot = Some(g);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(upstream);
                    continue;
                }
                Op::Conv2d { input, kernel, bias, geometry } => {
                    let need_input = self.node(*input).requires_grad;
                    let g = kernels::conv2d_backward(
                        geometry,
                        self.value(*input),
                        self.value(*kernel),
                        &upstream,
                        need_input,
                    )?;
                    if let Some(dx) = g.input {
                        send(*input, dx, &mut grads)?;
                    }
                    send(*kernel, g.kernel, &mut grads)?;
                    send(*bias, g.bias, &mut grads)?;
                }
                Op::GroupNorm { input, gamma, beta, ctx } => {
                    let g = kernels::group_norm_backward(ctx, self.value(*gamma), &upstream)?;
                    send(*input, g.input, &mut grads)?;
                    send(*gamma, g.gamma, &mut grads)?;
                    send(*beta, g.beta, &mut grads)?;
                }
                Op::Relu { input } => {
                    send(*input, kernels::relu_backward(&node.value, &upstream), &mut grads)?;
                }
                Op::MaxPool { input, argmax } => {
                    let dx = kernels::max_pool2d_backward(self.value(*input).shape(), argmax, &upstream);
                    send(*input, dx, &mut grads)?;
                }
                Op::Flatten { input } => {
                    let shape = self.value(*input).shape().to_vec();
                    send(*input, upstream.reshape(shape)?, &mut grads)?;
                }
                Op::Linear { input, weight, bias } => {
                    let need_input = self.node(*input).requires_grad;
                    let g = kernels::linear_backward(self.value(*input), self.value(*weight), &upstream, need_input)?;
                    if let Some(dx) = g.input {
                        send(*input, dx, &mut grads)?;
                    }
                    send(*weight, g.weight, &mut grads)?;
                    send(*bias, g.bias, &mut grads)?;
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let g = kernels::softmax_cross_entropy_backward(probs, labels, upstream.data()[0]);
                    send(*logits, g, &mut grads)?;
                }
                Op::WeightedSum { input, weights } => {
                    let u = upstream.data()[0];
                    let data = weights.data().iter().map(|&w| w * u).collect();
                    send(*input, Tensor::new(weights.shape().to_vec(), data)?, &mut grads)?;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of [`Graph::backward`]: one optional gradient per node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

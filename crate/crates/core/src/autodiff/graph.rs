use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{Backend, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::kernels::{self, Resize};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf { track: bool },
    Param(ParamId),
    Conv { x: NodeId, w: NodeId, pad: usize },
    Prelu { x: NodeId, s: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Concat { a: NodeId, b: NodeId, split: usize },
    Resize { x: NodeId },
    Shuffle { x: NodeId, r: usize },
    Unshuffle { x: NodeId, r: usize },
    Dft2(NodeId),
    AbsSum(NodeId),
    SquareSum(NodeId),
    Sum(NodeId),
}

struct Node<T> {
    op: Op<T>,
    /// `None` for parameters, whose values live in the store.
    value: Option<Tensor<T>>,
}

/// Tape of operations recorded in topological order.
///
/// Node ids only ever refer to earlier nodes, so the tape is acyclic and a
/// single reverse sweep visits each node once.
pub struct Graph<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: BTreeMap<ParamId, NodeId>,
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    params: Vec<Option<Tensor<T>>>,
    leaves: BTreeMap<NodeId, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for every variable reached by the backward pass.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of a leaf created with [`Graph::input`].
    pub fn leaf(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.leaves.get(&id)
    }
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + b;
            }
        }
        None => *slot = Some(g),
    }
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: BTreeMap::new(),
        }
    }

    /// A leaf whose gradient is reported by [`Gradients::leaf`].
    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Op::Leaf { track: true }, t)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op, value: Some(value) });
        NodeId(self.nodes.len() - 1)
    }

    fn value(&self, id: NodeId) -> &Tensor<T> {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (Op::Param(p), _) => self.params.value(*p),
            (_, Some(v)) => v,
            (_, None) => unreachable!("value of node {} already released", id.0),
        }
    }

    /// Propagates `∂loss/∂·` to every parameter and tracked leaf.
    ///
    /// Consumes the tape; intermediate values are released as soon as the
    /// sweep has passed them.
    pub fn backward(mut self, loss: NodeId) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if !shape.is_scalar() {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut out = Gradients {
            params: vec![None; self.params.len()],
            leaves: BTreeMap::new(),
        };

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                self.nodes[i].value = None;
                continue;
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf { track } => {
                    if track {
                        out.leaves.insert(NodeId(i), g);
                    }
                }
                Op::Param(p) => accumulate(&mut out.params[p.0], g),
                Op::Conv { x, w, pad } => {
                    let (xv, wv) = (self.value(x), self.value(w));
                    let gx = kernels::conv2d_backward_input(&g, wv, xv.shape(), pad);
                    let gw = kernels::conv2d_backward_weight(&g, xv, wv.shape(), pad);
                    accumulate(&mut grads[x.0], gx);
                    accumulate(&mut grads[w.0], gw);
                }
                Op::Prelu { x, s } => {
                    let (gx, gs) = kernels::prelu_backward(&g, self.value(x), self.value(s));
                    accumulate(&mut grads[x.0], gx);
                    accumulate(&mut grads[s.0], gs);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[b.0], g.map(|v| -v));
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(self.value(b))?;
                    let gb = g.mul(self.value(a))?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Scale(a, s) => accumulate(&mut grads[a.0], g.scale(s)),
                Op::Concat { a, b, split } => {
                    let (ga, gb) = kernels::split_channels(&g, split)?;
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Resize { x } => {
                    let gx = kernels::resize_bilinear_backward(&g, self.value(x).shape());
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Shuffle { x, r } => accumulate(&mut grads[x.0], kernels::pixel_unshuffle(&g, r)?),
                Op::Unshuffle { x, r } => accumulate(&mut grads[x.0], kernels::pixel_shuffle(&g, r)?),
                Op::Dft2(x) => accumulate(&mut grads[x.0], kernels::dft2_adjoint(&g)),
                Op::AbsSum(x) => {
                    let s = g.item()?;
                    let gx = self.value(x).map(|v| {
                        if v > T::zero() {
                            s
                        } else if v < T::zero() {
                            -s
                        } else {
                            T::zero()
                        }
                    });
                    accumulate(&mut grads[x.0], gx);
                }
                Op::SquareSum(x) => {
                    let s = g.item()? * T::from_f64(2.0);
                    let gx = self.value(x).map(|v| v * s);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Sum(x) => {
                    let s = g.item()?;
                    let shape = self.value(x).shape();
                    accumulate(&mut grads[x.0], Tensor::full(shape, s));
                }
            }
            self.nodes[i].value = None;
        }
        Ok(out)
    }
}

impl<'p, T: Real> Backend<T> for Graph<'p, T> {
    type Value = NodeId;

    fn params(&self) -> &ParamStore<T> {
        self.params
    }

    fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    fn constant(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Op::Leaf { track: false }, t)
    }

    fn tensor<'a>(&'a self, v: &'a NodeId) -> &'a Tensor<T> {
        self.value(*v)
    }

    fn conv2d(&mut self, x: &NodeId, w: &NodeId, pad: usize) -> Result<NodeId> {
        let y = kernels::conv2d(self.value(*x), self.value(*w), pad)?;
        Ok(self.push(Op::Conv { x: *x, w: *w, pad }, y))
    }

    fn prelu(&mut self, x: &NodeId, slopes: &NodeId) -> Result<NodeId> {
        let y = kernels::prelu(self.value(*x), self.value(*slopes))?;
        Ok(self.push(Op::Prelu { x: *x, s: *slopes }, y))
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let y = self.value(*a).add(self.value(*b))?;
        Ok(self.push(Op::Add(*a, *b), y))
    }

    fn sub(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let y = self.value(*a).sub(self.value(*b))?;
        Ok(self.push(Op::Sub(*a, *b), y))
    }

    fn mul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let y = self.value(*a).mul(self.value(*b))?;
        Ok(self.push(Op::Mul(*a, *b), y))
    }

    fn scale(&mut self, a: &NodeId, s: T) -> NodeId {
        let y = self.value(*a).scale(s);
        self.push(Op::Scale(*a, s), y)
    }

    fn concat(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let y = kernels::concat_channels(self.value(*a), self.value(*b))?;
        let split = self.value(*a).shape().c;
        Ok(self.push(Op::Concat { a: *a, b: *b, split }, y))
    }

    fn resize(&mut self, a: &NodeId, ratio: Resize) -> Result<NodeId> {
        let y = kernels::bilinear_resize(self.value(*a), ratio)?;
        Ok(self.push(Op::Resize { x: *a }, y))
    }

    fn pixel_shuffle(&mut self, a: &NodeId, r: usize) -> Result<NodeId> {
        let y = kernels::pixel_shuffle(self.value(*a), r)?;
        Ok(self.push(Op::Shuffle { x: *a, r }, y))
    }

    fn pixel_unshuffle(&mut self, a: &NodeId, r: usize) -> Result<NodeId> {
        let y = kernels::pixel_unshuffle(self.value(*a), r)?;
        Ok(self.push(Op::Unshuffle { x: *a, r }, y))
    }

    fn dft2(&mut self, a: &NodeId) -> NodeId {
        let y = kernels::dft2_stacked(self.value(*a));
        self.push(Op::Dft2(*a), y)
    }

    fn abs_sum(&mut self, a: &NodeId) -> NodeId {
        let s = self.value(*a).data().iter().fold(T::zero(), |acc, v| acc + v.abs());
        self.push(Op::AbsSum(*a), Tensor::scalar(s))
    }

    fn square_sum(&mut self, a: &NodeId) -> NodeId {
        let s = self.value(*a).data().iter().fold(T::zero(), |acc, &v| acc + v * v);
        self.push(Op::SquareSum(*a), Tensor::scalar(s))
    }

    fn sum(&mut self, a: &NodeId) -> NodeId {
        let s = self.value(*a).sum();
        self.push(Op::Sum(*a), Tensor::scalar(s))
    }
}

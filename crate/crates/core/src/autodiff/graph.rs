use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::kernels::ConvGeom;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation record; each variant keeps exactly what its backward rule needs.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Conv3d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        channels: usize,
        /// Normalized input, `(x - mean) * inv_std`.
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
        batch_stats: bool,
    },
    Relu {
        input: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Softmax {
        input: Var,
    },
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        p: usize,
    },
    GlobalAvgPool {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: f32,
    },
    Sum {
        input: Var,
    },
    Mean {
        input: Var,
    },
    Reshape {
        input: Var,
    },
    Permute {
        input: Var,
        perm: Vec<usize>,
    },
    Mse {
        pred: Var,
        target: Var,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
}

/// Append-only record of a computation. Nodes are stored in creation order,
/// which is a topological order, so the backward pass is a single reverse
/// sweep.
///
/// Gradients of leaf nodes accumulate across [`Graph::backward`] calls until
/// [`Graph::zero_grad`] is called.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f32>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. It tracks gradients iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad();
        self.push(tensor, Op::Leaf, requires_grad)
    }

    /// Adds a gradient-tracking leaf holding a copy of `tensor`.
    pub fn param(&mut self, tensor: &Tensor) -> Var {
        let mut value = tensor.clone();
        value.clear_grad();
        self.push(value.with_requires_grad(true), Op::Leaf, true)
    }

    /// Adds a leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.push(tensor.with_requires_grad(false), Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, var: Var) -> Option<&[f32]> {
        self.leaf_grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Signs of every ReLU input recorded so far, one bit per element. Two
    /// evaluations with equal patterns lie on the same linear piece of every
    /// ReLU.
    pub fn relu_pattern(&self) -> Vec<u64> {
        let mut bits = Vec::new();
        let mut word = 0u64;
        let mut n = 0;
        for node in &self.nodes {
            if let Op::Relu { input } = node.op {
                for &x in self.nodes[input.0].value.data() {
                    word |= ((x > 0.0) as u64) << (n % 64);
                    n += 1;
                    if n % 64 == 0 {
                        bits.push(word);
                        word = 0;
                    }
                }
            }
        }
        if n % 64 != 0 {
            bits.push(word);
        }
        bits
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Reverse-mode sweep from a scalar `loss`. Leaf gradients are added to
    /// whatever previous calls left behind.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss(loss_shape.to_vec()));
        }
        if self.leaf_grads.len() < self.nodes.len() {
            self.leaf_grads.resize(self.nodes.len(), None);
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.leaf_grads[idx] {
                    Some(acc) => acc.iter_mut().zip(&gout).for_each(|(a, g)| *a += g),
                    slot @ None => *slot = Some(gout),
                }
                continue;
            }
            self.backward_op(idx, &gout, &mut grads)?;
        }
        Ok(())
    }
}

/// Adds into the gradient slot of `var`, creating a zero buffer first.
/// Skips vars that do not track gradients.
pub(crate) fn accumulate_with(
    graph: &Graph,
    grads: &mut [Option<Vec<f32>>],
    var: Var,
    f: impl FnOnce(&mut [f32]),
) {
    let node = &graph.nodes[var.0];
    if !node.requires_grad {
        return;
    }
    let buf = grads[var.0].get_or_insert_with(|| vec![0.0; node.value.numel()]);
    f(buf);
}

pub(crate) fn accumulate(graph: &Graph, grads: &mut [Option<Vec<f32>>], var: Var, g: &[f32]) {
    accumulate_with(graph, grads, var, |buf| {
        buf.iter_mut().zip(g).for_each(|(b, v)| *b += v)
    });
}

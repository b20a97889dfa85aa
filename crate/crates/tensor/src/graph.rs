//! Tape of recorded operations and the reverse-mode sweep.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::kernels::ConvDims;
use crate::tensor::Tensor;

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train or eval behaviour for dropout and batch normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

pub(crate) enum Op<T> {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        dims: ConvDims,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        channels: usize,
        inner: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    WeightNorm {
        v: Var,
        g: Var,
        norms: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        probs: Vec<T>,
        dims: [usize; 4],
    },
    Relu(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
        rows: usize,
        n: usize,
        m: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBroadcast(Var, Var),
    Scale(Var, T),
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    Expand {
        x: Var,
        times: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    MseLoss {
        pred: Var,
        target: Var,
    },
}

impl<T> Op<T> {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv { .. } => "conv",
            Op::BatchNorm { .. } => "batch_norm",
            Op::WeightNorm { .. } => "weight_norm",
            Op::Attention { .. } => "attention",
            Op::Relu(_) => "relu",
            Op::Gelu(_) => "gelu",
            Op::Softmax(_) => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Dropout { .. } => "dropout",
            Op::Linear { .. } => "linear",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBroadcast(..) => "add_broadcast",
            Op::Scale(..) => "scale",
            Op::Reshape(_) => "reshape",
            Op::Permute { .. } => "permute",
            Op::Expand { .. } => "expand",
            Op::Concat { .. } => "concat",
            Op::Narrow { .. } => "narrow",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MseLoss { .. } => "mse_loss",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv { x, w, b, .. } | Op::Linear { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            Op::BatchNorm { x, gamma, beta, .. } | Op::LayerNorm { x, gamma, beta, .. } => {
                vec![*x, *gamma, *beta]
            }
            Op::WeightNorm { v, g, .. } => vec![*v, *g],
            Op::Attention { q, k, v, .. } => vec![*q, *k, *v],
            Op::Relu(x)
            | Op::Gelu(x)
            | Op::Softmax(x)
            | Op::Scale(x, _)
            | Op::Reshape(x)
            | Op::Sum(x)
            | Op::Mean(x) => vec![*x],
            Op::Dropout { x, .. }
            | Op::Permute { x, .. }
            | Op::Expand { x, .. }
            | Op::Narrow { x, .. } => vec![*x],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBroadcast(a, b) => {
                vec![*a, *b]
            }
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::MseLoss { pred, target } => vec![*pred, *target],
        }
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
}

/// Records a forward computation and replays it backwards.
///
/// Nodes are appended in evaluation order, so every input precedes its
/// consumers and the tape is acyclic by construction. A graph belongs to
/// one thread; the kernels behind each node may fan out internally.
pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
    validate: bool,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    /// New graph; non-finite checking follows `debug_assertions`.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            validate: cfg!(debug_assertions),
        }
    }

    /// Enables or disables the per-operation non-finite check.
    pub fn set_validate(&mut self, on: bool) {
        self.validate = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node, keeping the allocation.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// Records an input; it receives gradients iff `requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
        });
        Var(id)
    }

    /// Shorthand for a leaf that requires gradients.
    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    /// Shorthand for a leaf that never requires gradients.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::Contract(format!(
                "variable {} does not belong to this graph ({} nodes)",
                v.0,
                self.nodes.len()
            )))
        }
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>) -> Result<Var> {
        if self.validate && data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let requires_grad = op.inputs().iter().any(|i| self.requires_grad(*i));
        let mut value = Tensor::from_parts(shape, data);
        value.set_requires_grad(requires_grad);
        let id = self.nodes.len();
        self.nodes.push(Node { value, op });
        Ok(Var(id))
    }

    /// Reverse-mode sweep from a one-element `loss`.
    ///
    /// Leaf gradients are accumulated, so calling this twice without
    /// [`Graph::zero_grad`] adds the gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.requires_grad() {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].value.requires_grad() {
                continue;
            }
            if let Op::Leaf = self.nodes[id].op {
                self.nodes[id].value.accumulate_grad(&g);
                continue;
            }
            for (input, contrib) in crate::ops::backward(self, id, &g) {
                if !self.requires_grad(input) {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contrib) {
                            *a = *a + *c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    /// Copies a recorded value (with its gradient, if any) out of the graph.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        self.nodes[v.0].value.clone()
    }
}

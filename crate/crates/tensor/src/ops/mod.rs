//! Differentiable operations. Each submodule adds forward methods to
//! [`Graph`] and provides the matching vector-Jacobian product.

mod activation;
mod attention;
mod conv;
mod linear;
mod norm;
mod shape;

pub use conv::{Conv1dOptions, Conv2dOptions, Padding2d};
pub use norm::{BatchNormConfig, RunningStats};

use crate::element::Element;
use crate::graph::{Graph, Op, Var};

pub(crate) fn backward<T: Element>(g: &Graph<T>, id: usize, gout: &[T]) -> Vec<(Var, Vec<T>)> {
    let node = &g.nodes[id];
    match &node.op {
        Op::Leaf => Vec::new(),
        Op::Conv { x, w, b, dims } => conv::backward(g, *x, *w, *b, dims, gout),
        Op::BatchNorm {
            x,
            gamma,
            beta,
            channels,
            inner,
            xhat,
            inv_std,
            train,
        } => norm::batch_norm_backward(
            g, *x, *gamma, *beta, *channels, *inner, xhat, inv_std, *train, gout,
        ),
        Op::WeightNorm { v, g: gain, norms } => norm::weight_norm_backward(g, *v, *gain, norms, gout),
        Op::Attention { q, k, v, probs, dims } => {
            attention::backward(g, *q, *k, *v, probs, *dims, gout)
        }
        Op::Relu(x) => activation::relu_backward(g, *x, gout),
        Op::Gelu(x) => activation::gelu_backward(g, *x, gout),
        Op::Softmax(x) => activation::softmax_backward(*x, node.value.data(), node.value.shape(), gout),
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => norm::layer_norm_backward(g, *x, *gamma, *beta, xhat, inv_std, gout),
        Op::Dropout { x, mask } => activation::dropout_backward(*x, mask, gout),
        Op::Linear {
            x,
            w,
            b,
            rows,
            n,
            m,
        } => linear::backward(g, *x, *w, *b, *rows, *n, *m, gout),
        Op::Add(a, b) => shape::add_backward(*a, *b, gout),
        Op::Sub(a, b) => shape::sub_backward(*a, *b, gout),
        Op::Mul(a, b) => shape::mul_backward(g, *a, *b, gout),
        Op::AddBroadcast(a, b) => shape::add_broadcast_backward(g, *a, *b, gout),
        Op::Scale(x, c) => vec![(*x, gout.iter().map(|v| *v * *c).collect())],
        Op::Reshape(x) => vec![(*x, gout.to_vec())],
        Op::Permute { x, perm } => shape::permute_backward(*x, perm, node.value.shape(), gout),
        Op::Expand { x, times } => shape::expand_backward(*x, *times, gout),
        Op::Concat { inputs, axis } => shape::concat_backward(g, inputs, *axis, node.value.shape(), gout),
        Op::Narrow { x, axis, start } => {
            shape::narrow_backward(g, *x, *axis, *start, node.value.shape(), gout)
        }
        Op::Sum(x) => vec![(*x, vec![gout[0]; g.value(*x).numel()])],
        Op::Mean(x) => {
            let n = g.value(*x).numel();
            vec![(*x, vec![gout[0] / T::lit(n as f64); n])]
        }
        Op::MseLoss { pred, target } => shape::mse_backward(g, *pred, *target, gout),
    }
}

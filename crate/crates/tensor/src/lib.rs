//! Dense tensors with tape-based reverse-mode automatic differentiation.
//!
//! Values live in a [`Graph`]; every operation appends a node and returns a
//! [`Var`] handle. [`Graph::backward`] sweeps the tape once in reverse and
//! accumulates gradients into the leaves that asked for them.
//!
//! ```
//! use eegvit_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.param(Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap());
//! let y = g.mul(x, x).unwrap();
//! let loss = g.sum(y).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
//! ```
//!
//! Conventions: convolutions are cross-correlations (no kernel flip);
//! batch norm uses momentum 0.1 and eps 1e-5; dropout is inverted; the
//! ReLU derivative at 0 is 0.

mod element;
mod error;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod ops;
pub mod parallel;
mod rng;
mod tensor;

pub use element::{DType, Element};
pub use error::{Result, TensorError};
pub use graph::{Graph, Mode, Var};
pub use ops::{BatchNormConfig, Conv1dOptions, Conv2dOptions, Padding2d, RunningStats};
pub use rng::RngStream;
pub use tensor::Tensor;

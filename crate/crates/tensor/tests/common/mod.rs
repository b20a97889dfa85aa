#![allow(dead_code)]

use eegvit_tensor::{Graph, Result, RngStream, Tensor, Var};

/// Uniform entries in `±[lo, hi]`, which keeps them away from the ReLU kink.
pub fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = RngStream::new(seed);
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = rng.uniform_range(lo, hi);
        if rng.uniform() < 0.5 {
            -m
        } else {
            m
        }
    })
}

pub fn gauss(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = RngStream::new(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.normal())
}

/// `Σ y ⊙ r` with a fixed random `r`, so every output coordinate matters.
pub fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let r = g.constant(random(&shape, seed ^ 0xABCD, 0.5, 1.5));
    let m = g.mul(y, r)?;
    g.sum(m)
}

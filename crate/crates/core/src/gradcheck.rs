//! Finite-difference gradient checks in 64-bit: one case per
//! differentiable operation, and the whole model at desk scale.
//!
//! Every case reduces its output to a scalar through a fixed random
//! projection `Σ y ⊙ r`, so every output coordinate contributes. Inputs
//! that pass through a ReLU are drawn with magnitudes in `[0.1, 1]` to stay
//! clear of the kink.

use std::time::Instant;

use eegvit_tensor::gradcheck::{grad_check, grad_check_with, GradCheckOptions, DEFAULT_EPS};
use eegvit_tensor::{
    BatchNormConfig, Conv1dOptions, Conv2dOptions, Graph, Mode, RngStream, RunningStats, Tensor, Var,
};

use crate::config::ModelConfig;
use crate::error::Result;
use crate::model::{Bindings, Model};

pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub seconds: f64,
    /// Coordinate with the largest error.
    pub worst: Option<String>,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn gauss(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = RngStream::new(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.normal())
}

/// Entries in `±[lo, hi]` with random sign.
fn away_from_zero(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
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

fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> eegvit_tensor::Result<Var> {
    let shape = g.shape(y).to_vec();
    let r = g.constant(away_from_zero(&shape, seed, 0.5, 1.5));
    let m = g.mul(y, r)?;
    g.sum(m)
}

type Case = (&'static str, Vec<Tensor<f64>>, Box<dyn Fn(&mut Graph<f64>, &[Var]) -> eegvit_tensor::Result<Var>>);

fn cases() -> Vec<Case> {
    vec![
        (
            "conv2d",
            vec![gauss(&[2, 3, 5, 7], 1), gauss(&[4, 3, 3, 3], 2), gauss(&[4], 3)],
            Box::new(|g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), Conv2dOptions::new((1, 1), (1, 1)))?;
                project(g, y, 10)
            }),
        ),
        (
            "conv2d_strided",
            vec![gauss(&[2, 1, 4, 20], 4), gauss(&[3, 1, 1, 6], 5)],
            Box::new(|g, v| {
                let y = g.conv2d(v[0], v[1], None, Conv2dOptions::new((1, 6), (0, 2)))?;
                project(g, y, 11)
            }),
        ),
        (
            "conv1d_causal_dilated",
            vec![gauss(&[2, 3, 12], 6), gauss(&[4, 3, 3], 7), gauss(&[4], 8)],
            Box::new(|g, v| {
                let y = g.conv1d(v[0], v[1], Some(v[2]), Conv1dOptions::causal(3, 2))?;
                project(g, y, 12)
            }),
        ),
        (
            "batch_norm_train",
            vec![gauss(&[4, 3, 2, 5], 13), gauss(&[3], 14), gauss(&[3], 15)],
            Box::new(|g, v| {
                let mut s = RunningStats::new(3);
                let y = g.batch_norm(v[0], v[1], v[2], &mut s, Mode::Train, BatchNormConfig::default())?;
                project(g, y, 16)
            }),
        ),
        (
            "batch_norm_eval",
            vec![gauss(&[2, 3, 4], 17), gauss(&[3], 18), gauss(&[3], 19)],
            Box::new(|g, v| {
                let mut s = RunningStats {
                    mean: vec![0.1, -0.2, 0.3],
                    var: vec![0.5, 1.5, 2.0],
                };
                let y = g.batch_norm(v[0], v[1], v[2], &mut s, Mode::Eval, BatchNormConfig::default())?;
                project(g, y, 20)
            }),
        ),
        (
            "weight_norm",
            vec![gauss(&[4, 3, 2], 21), away_from_zero(&[4], 22, 0.5, 2.0)],
            Box::new(|g, v| {
                let y = g.weight_norm(v[0], v[1])?;
                project(g, y, 23)
            }),
        ),
        (
            "attention",
            vec![gauss(&[2, 1, 3, 4], 24), gauss(&[2, 1, 3, 4], 25), gauss(&[2, 1, 3, 4], 26)],
            Box::new(|g, v| {
                let y = g.attention(v[0], v[1], v[2])?;
                project(g, y, 27)
            }),
        ),
        (
            "linear",
            vec![gauss(&[3, 4], 28), gauss(&[5, 4], 29), gauss(&[5], 30)],
            Box::new(|g, v| {
                let y = g.linear(v[0], v[1], Some(v[2]))?;
                project(g, y, 31)
            }),
        ),
        (
            "relu",
            vec![away_from_zero(&[30], 32, 0.1, 1.0)],
            Box::new(|g, v| {
                let y = g.relu(v[0])?;
                project(g, y, 33)
            }),
        ),
        (
            "gelu",
            vec![gauss(&[30], 34)],
            Box::new(|g, v| {
                let y = g.gelu(v[0])?;
                project(g, y, 35)
            }),
        ),
        (
            "softmax",
            vec![gauss(&[3, 5], 36)],
            Box::new(|g, v| {
                let y = g.softmax(v[0])?;
                project(g, y, 37)
            }),
        ),
        (
            "layer_norm",
            vec![gauss(&[3, 6], 38), gauss(&[6], 39), gauss(&[6], 40)],
            Box::new(|g, v| {
                let y = g.layer_norm(v[0], v[1], v[2], 1e-6)?;
                project(g, y, 41)
            }),
        ),
        (
            "dropout",
            vec![gauss(&[40], 42)],
            Box::new(|g, v| {
                let mut rng = RngStream::new(99);
                let y = g.dropout(v[0], 0.5, Mode::Train, &mut rng)?;
                project(g, y, 43)
            }),
        ),
        (
            "layout",
            vec![gauss(&[1, 1, 4], 44), gauss(&[2, 3, 4], 45), gauss(&[1, 4, 4], 46)],
            Box::new(|g, v| {
                let cls = g.expand(v[0], 2)?;
                let p = g.permute(v[1], &[0, 1, 2])?;
                let h = g.concat(&[cls, p], 1)?;
                let h = g.add_broadcast(h, v[2])?;
                let h = g.narrow(h, 1, 1, 2)?;
                let h = g.reshape(h, &[4, 4])?;
                let h = g.permute(h, &[1, 0])?;
                let s = g.scale(h, 0.5)?;
                let d = g.sub(s, h)?;
                project(g, d, 47)
            }),
        ),
        (
            "mse_loss",
            vec![gauss(&[4, 2], 48), gauss(&[4, 2], 49)],
            Box::new(|g, v| g.mse_loss(v[0], v[1])),
        ),
    ]
}

/// Runs every per-operation case over all coordinates.
pub fn op_suite() -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    for (name, inputs, f) in cases() {
        let start = Instant::now();
        let r = grad_check(|g, v| f(g, v), &inputs, DEFAULT_EPS)?;
        lines.push(CheckLine {
            name: name.into(),
            max_rel_err: r.max_rel_err,
            checked: r.checked,
            tolerance: OP_TOLERANCE,
            seconds: start.elapsed().as_secs_f64(),
            worst: r.worst.map(|(i, j)| format!("input {i} [{j}]")),
        });
    }
    Ok(lines)
}

/// Checks `coords_per_tensor` random coordinates of every parameter tensor
/// of a 64-bit model in train mode (batch statistics, fixed dropout masks)
/// against an MSE loss on random targets, at freshly initialized weights
/// plus Gaussian jitter of σ = 0.05.
pub fn model_check(config: &ModelConfig, batch: usize, coords_per_tensor: usize, seed: u64) -> Result<CheckLine> {
    let start = Instant::now();
    let model = Model::<f64>::build(config.clone(), &RngStream::new(seed))?;
    let x = gauss(&[batch, config.in_channels, config.timepoints], seed ^ 0x5eed);
    let y = gauss(&[batch, 2], seed ^ 0x7a29);
    let names: Vec<&String> = model.params().keys().collect();
    // Zero-initialized biases can leave a residual sum at exactly 0 where a
    // whole receptive field is dead, and a central difference across that
    // kink reads half the slope. Jitter every tensor to check at a generic
    // point instead.
    let mut jitter = RngStream::new(seed ^ 0x1177);
    let params: Vec<Tensor<f64>> = model
        .params()
        .values()
        .map(|t| Tensor::from_fn(t.shape().to_vec(), |i| t.data()[i] + 0.05 * jitter.normal()))
        .collect();
    let f = |g: &mut Graph<f64>, v: &[Var]| -> eegvit_tensor::Result<Var> {
        let b = Bindings::from_vars(v.to_vec());
        let xv = g.constant(x.clone());
        let yv = g.constant(y.clone());
        let mut rng = RngStream::new(seed ^ 0xd20f);
        let (out, _) = model
            .forward_graph(g, &b, xv, Mode::Train, &mut rng)
            .map_err(|e| eegvit_tensor::TensorError::Contract(e.to_string()))?;
        g.mse_loss(out, yv)
    };
    // The key bias adds q·b to every score of a query, which softmax
    // cancels; its true gradient is zero and both sides are rounding noise.
    let structural_zero: Vec<bool> = names.iter().map(|n| n.ends_with(".attn.k.bias")).collect();
    let skip = |i: usize, _: usize, _: f64| structural_zero[i];
    let r = grad_check_with(
        f,
        &params,
        &GradCheckOptions {
            eps: DEFAULT_EPS,
            max_coords: Some(coords_per_tensor),
            seed,
            skip: Some(&skip),
        },
    )?;
    Ok(CheckLine {
        name: format!("model ({} tensors)", params.len()),
        max_rel_err: r.max_rel_err,
        checked: r.checked,
        tolerance: MODEL_TOLERANCE,
        seconds: start.elapsed().as_secs_f64(),
        worst: r.worst.map(|(i, j)| format!("{} [{j}]", names[i])),
    })
}

//! Finite-difference checks for every differentiable operation (64-bit, eps 1e-5).

mod common;

use common::{gauss, project, random};
use eegvit_tensor::gradcheck::{grad_check, DEFAULT_EPS};
use eegvit_tensor::{
    BatchNormConfig, Conv1dOptions, Conv2dOptions, Mode, RngStream, RunningStats, Tensor,
};

const TOL: f64 = 1e-4;

#[test]
fn conv2d_gradient() {
    let inputs = [
        gauss(&[2, 3, 5, 7], 1),
        gauss(&[4, 3, 3, 3], 2),
        gauss(&[4], 3),
    ];
    let r = grad_check(
        |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), Conv2dOptions::new((1, 1), (1, 1)))?;
            project(g, y, 10)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn conv2d_strided_padded_gradient() {
    let inputs = [gauss(&[2, 1, 4, 20], 4), gauss(&[3, 1, 1, 6], 5)];
    let r = grad_check(
        |g, v| {
            let y = g.conv2d(v[0], v[1], None, Conv2dOptions::new((1, 6), (0, 2)))?;
            project(g, y, 11)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn conv1d_causal_dilated_gradient() {
    let inputs = [gauss(&[2, 3, 12], 6), gauss(&[4, 3, 3], 7), gauss(&[4], 8)];
    let r = grad_check(
        |g, v| {
            let y = g.conv1d(v[0], v[1], Some(v[2]), Conv1dOptions::causal(3, 2))?;
            project(g, y, 12)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn batch_norm_train_gradient() {
    let inputs = [
        gauss(&[3, 2, 5], 13),
        random(&[2], 14, 0.5, 1.5),
        gauss(&[2], 15),
    ];
    let r = grad_check(
        |g, v| {
            let mut st = RunningStats::new(2);
            let y = g.batch_norm(v[0], v[1], v[2], &mut st, Mode::Train, BatchNormConfig::default())?;
            project(g, y, 16)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn batch_norm_eval_gradient() {
    let inputs = [gauss(&[2, 3, 4], 17), gauss(&[3], 18), gauss(&[3], 19)];
    let r = grad_check(
        |g, v| {
            let mut st = RunningStats {
                mean: vec![0.1, -0.2, 0.3],
                var: vec![0.5, 1.5, 2.0],
            };
            let y = g.batch_norm(v[0], v[1], v[2], &mut st, Mode::Eval, BatchNormConfig::default())?;
            project(g, y, 20)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn weight_norm_gradient() {
    let inputs = [gauss(&[4, 3, 3], 21), random(&[4], 22, 0.5, 2.0)];
    let r = grad_check(
        |g, v| {
            let w = g.weight_norm(v[0], v[1])?;
            project(g, w, 23)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn attention_gradient() {
    let inputs = [
        gauss(&[2, 1, 3, 4], 24),
        gauss(&[2, 1, 3, 4], 25),
        gauss(&[2, 1, 3, 4], 26),
    ];
    let r = grad_check(
        |g, v| {
            let o = g.attention(v[0], v[1], v[2])?;
            project(g, o, 27)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn linear_gradient() {
    let inputs = [gauss(&[3, 4], 28), gauss(&[5, 4], 29), gauss(&[5], 30)];
    let r = grad_check(
        |g, v| {
            let y = g.linear(v[0], v[1], Some(v[2]))?;
            project(g, y, 31)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn activations_gradient() {
    let x = random(&[3, 5], 32, 0.1, 2.0);
    for which in ["relu", "gelu", "softmax"] {
        let r = grad_check(
            |g, v| {
                let y = match which {
                    "relu" => g.relu(v[0])?,
                    "gelu" => g.gelu(v[0])?,
                    _ => g.softmax(v[0])?,
                };
                project(g, y, 33)
            },
            &[x.clone()],
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(r.max_rel_err < TOL, "{which}: {r:?}");
    }
}

#[test]
fn layer_norm_gradient() {
    let inputs = [gauss(&[2, 3, 6], 34), gauss(&[6], 35), gauss(&[6], 36)];
    let r = grad_check(
        |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2], 1e-6)?;
            project(g, y, 37)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn dropout_gradient_with_fixed_mask() {
    let r = grad_check(
        |g, v| {
            let mut rng = RngStream::new(99);
            let y = g.dropout(v[0], 0.5, Mode::Train, &mut rng)?;
            project(g, y, 38)
        },
        &[gauss(&[40], 39)],
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn layout_ops_gradient() {
    let inputs = [gauss(&[1, 1, 4], 40), gauss(&[2, 3, 4], 41), gauss(&[1, 4, 4], 42)];
    let r = grad_check(
        |g, v| {
            let cls = g.expand(v[0], 2)?;
            let x = g.concat(&[cls, v[1]], 1)?;
            let x = g.add_broadcast(x, v[2])?;
            let x = g.permute(x, &[2, 0, 1])?;
            let x = g.reshape(x, &[4, 8])?;
            let x = g.narrow(x, 1, 2, 5)?;
            let x = g.scale(x, 0.7)?;
            let y = g.sub(x, x)?;
            let y = g.add(y, x)?;
            project(g, y, 43)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn mse_and_mean_gradient() {
    let inputs = [gauss(&[4, 2], 44), gauss(&[4, 2], 45)];
    let r = grad_check(
        |g, v| {
            let l = g.mse_loss(v[0], v[1])?;
            let m = g.mean(v[0])?;
            g.add(l, m)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_err < TOL, "{r:?}");
}

#[test]
fn mse_gradient_closed_form() {
    // d/dpred mean((p-t)^2) = 2(p-t)/(2B) for [B, 2]
    let p = gauss(&[3, 2], 46);
    let t = gauss(&[3, 2], 47);
    let mut g = eegvit_tensor::Graph::<f64>::new();
    let pv = g.param(p.clone());
    let tv = g.constant(t.clone());
    let l = g.mse_loss(pv, tv).unwrap();
    g.backward(l).unwrap();
    for ((gr, a), b) in g.grad(pv).unwrap().iter().zip(p.data()).zip(t.data()) {
        assert!((gr - 2.0 * (a - b) / 6.0).abs() < 1e-15);
    }
    let _ = Tensor::<f64>::zeros(vec![1]);
}

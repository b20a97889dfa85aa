//! Randomized-shape gradient checks (at least 20 cases per operation) and
//! structural invariants.

mod common;

use common::{gauss, project, random};
use eegvit_tensor::gradcheck::{grad_check, DEFAULT_EPS};
use eegvit_tensor::{
    BatchNormConfig, Conv1dOptions, Conv2dOptions, Graph, Mode, RngStream, RunningStats, Tensor,
};
use proptest::prelude::*;

const TOL: f64 = 1e-4;

fn cfg() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn conv2d_random_shapes(b in 1usize..3, ci in 1usize..3, co in 1usize..3,
                            h in 3usize..6, w in 3usize..6, kh in 1usize..3, kw in 1usize..4,
                            sh in 1usize..3, sw in 1usize..3, ph in 0usize..2, pw in 0usize..2,
                            seed in 0u64..1000) {
        let inputs = [gauss(&[b, ci, h, w], seed), gauss(&[co, ci, kh, kw], seed + 1), gauss(&[co], seed + 2)];
        let r = grad_check(|g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), Conv2dOptions::new((sh, sw), (ph, pw)))?;
            project(g, y, seed)
        }, &inputs, DEFAULT_EPS).unwrap();
        prop_assert!(r.max_rel_err < TOL, "{:?}", r);
    }

    #[test]
    fn conv1d_random_shapes(b in 1usize..3, ci in 1usize..3, co in 1usize..3, l in 4usize..10,
                            k in 1usize..4, d in 1usize..3, causal in any::<bool>(), s in 1usize..3,
                            seed in 0u64..1000) {
        let opts = if causal { Conv1dOptions::causal(k, d) } else { Conv1dOptions { dilation: d, ..Conv1dOptions::strided(s) } };
        prop_assume!((k - 1) * d < l);
        let inputs = [gauss(&[b, ci, l], seed), gauss(&[co, ci, k], seed + 1), gauss(&[co], seed + 2)];
        let r = grad_check(|g, v| {
            let y = g.conv1d(v[0], v[1], Some(v[2]), opts)?;
            project(g, y, seed)
        }, &inputs, DEFAULT_EPS).unwrap();
        prop_assert!(r.max_rel_err < TOL, "{:?}", r);
    }

    #[test]
    fn batch_norm_random_shapes(b in 2usize..4, c in 1usize..4, n in 1usize..5, seed in 0u64..1000) {
        let inputs = [gauss(&[b, c, n], seed), random(&[c], seed + 1, 0.5, 1.5), gauss(&[c], seed + 2)];
        let r = grad_check(|g, v| {
            let mut st = RunningStats::new(c);
            let y = g.batch_norm(v[0], v[1], v[2], &mut st, Mode::Train, BatchNormConfig::default())?;
            project(g, y, seed)
        }, &inputs, DEFAULT_EPS).unwrap();
        prop_assert!(r.max_rel_err < TOL, "{:?}", r);
    }

    #[test]
    fn layer_norm_random_shapes(r0 in 1usize..4, d in 2usize..7, seed in 0u64..1000) {
        let inputs = [gauss(&[r0, d], seed), gauss(&[d], seed + 1), gauss(&[d], seed + 2)];
        let r = grad_check(|g, v| {
            let y = g.layer_norm(v[0], v[1], v[2], 1e-6)?;
            project(g, y, seed)
        }, &inputs, DEFAULT_EPS).unwrap();
        prop_assert!(r.max_rel_err < TOL, "{:?}", r);
    }

    #[test]
    fn weight_norm_random_shapes(co in 1usize..4, ci in 1usize..4, k in 1usize..4, seed in 0u64..1000) {
        let inputs = [gauss(&[co, ci, k], seed), random(&[co], seed + 1, 0.5, 2.0)];
        let r = grad_check(|g, v| {
            let w = g.weight_norm(v[0], v[1])?;
            project(g, w, seed)
        }, &inputs, DEFAULT_EPS).unwrap();
        prop_assert!(r.max_rel_err < TOL, "{:?}", r);
    }

    #[test]
    fn attention_random_shapes(b in 1usize..3, h in 1usize..3, t in 1usize..5, d in 1usize..5, seed in 0u64..1000) {
        let inputs = [gauss(&[b, h, t, d], seed), gauss(&[b, h, t, d], seed + 1), gauss(&[b, h, t, d], seed + 2)];
        let r = grad_check(|g, v| {
            let o = g.attention(v[0], v[1], v[2])?;
            project(g, o, seed)
        }, &inputs, DEFAULT_EPS).unwrap();
        prop_assert!(r.max_rel_err < TOL, "{:?}", r);
    }

    #[test]
    fn linear_random_shapes(rows in 1usize..5, n in 1usize..6, m in 1usize..6, seed in 0u64..1000) {
        let inputs = [gauss(&[rows, n], seed), gauss(&[m, n], seed + 1), gauss(&[m], seed + 2)];
        let r = grad_check(|g, v| {
            let y = g.linear(v[0], v[1], Some(v[2]))?;
            project(g, y, seed)
        }, &inputs, DEFAULT_EPS).unwrap();
        prop_assert!(r.max_rel_err < TOL, "{:?}", r);
    }

    #[test]
    fn activations_random_shapes(r0 in 1usize..4, d in 1usize..7, seed in 0u64..1000) {
        let x = random(&[r0, d], seed, 0.05, 3.0);
        for which in 0..3 {
            let r = grad_check(|g, v| {
                let y = match which {
                    0 => g.relu(v[0])?,
                    1 => g.gelu(v[0])?,
                    _ => g.softmax(v[0])?,
                };
                project(g, y, seed)
            }, &[x.clone()], DEFAULT_EPS).unwrap();
            prop_assert!(r.max_rel_err < TOL, "op {}: {:?}", which, r);
        }
    }

    #[test]
    fn dropout_random_shapes(n in 1usize..40, rate in 0.0f64..0.9, seed in 0u64..1000) {
        let r = grad_check(|g, v| {
            let mut rng = RngStream::new(seed);
            let y = g.dropout(v[0], rate, Mode::Train, &mut rng)?;
            project(g, y, seed)
        }, &[gauss(&[n], seed)], DEFAULT_EPS).unwrap();
        prop_assert!(r.max_rel_err < TOL, "{:?}", r);
    }

    #[test]
    fn causal_conv1d_exhaustive(l in 1usize..=32, k in 1usize..4, d in 1usize..4, seed in 0u64..1000) {
        let xt = gauss(&[1, 1, l], seed);
        let wt = gauss(&[2, 1, k], seed + 1);
        let run = |x: &Tensor<f64>| {
            let mut g = Graph::<f64>::new();
            let xv = g.constant(x.clone());
            let wv = g.constant(wt.clone());
            let y = g.conv1d(xv, wv, None, Conv1dOptions::causal(k, d)).unwrap();
            g.data(y).to_vec()
        };
        let base = run(&xt);
        prop_assert_eq!(base.len(), 2 * l);
        for t in 0..l {
            let mut p = xt.clone();
            p.data_mut()[t] += 1.0;
            let out = run(&p);
            for c in 0..2 {
                for s in 0..t {
                    prop_assert_eq!(out[c * l + s], base[c * l + s]);
                }
            }
        }
    }

    #[test]
    fn softmax_rows_are_distributions(r0 in 1usize..6, d in 1usize..12, scale in 0.1f64..50.0, seed in 0u64..1000) {
        let mut g = Graph::<f64>::new();
        let mut rng = RngStream::new(seed);
        let x = g.constant(Tensor::from_fn(vec![r0, d], |_| scale * rng.normal()));
        let y = g.softmax(x).unwrap();
        for row in g.data(y).chunks(d) {
            prop_assert!(row.iter().all(|p| *p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn weight_norm_invariants(co in 1usize..5, ci in 1usize..4, k in 1usize..4, c in 0.01f64..100.0, seed in 0u64..1000) {
        let vt = gauss(&[co, ci, k], seed);
        let gt = random(&[co], seed + 1, 0.5, 2.0);
        let mut g = Graph::<f64>::new();
        let v = g.constant(vt.clone());
        let ones = g.constant(Tensor::ones(vec![co]));
        let unit = g.weight_norm(v, ones).unwrap();
        for row in g.data(unit).chunks(ci * k) {
            prop_assert!((row.iter().map(|a| a * a).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
        }
        let gv = g.constant(gt);
        let w = g.weight_norm(v, gv).unwrap();
        let scaled = g.constant(Tensor::from_fn(vec![co, ci, k], |i| c * vt.data()[i]));
        let w2 = g.weight_norm(scaled, gv).unwrap();
        for (a, b) in g.data(w).iter().zip(g.data(w2)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn backward_accumulates_additively(n in 1usize..10, seed in 0u64..1000) {
        let mut g = Graph::<f64>::new();
        let x = g.param(gauss(&[n], seed));
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        let once = g.grad(x).unwrap().to_vec();
        g.backward(s).unwrap();
        for (a, b) in g.grad(x).unwrap().iter().zip(&once) {
            prop_assert_eq!(*a, 2.0 * b);
        }
    }
}

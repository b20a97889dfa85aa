use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eegvit_tensor::{parallel, Conv1dOptions, Conv2dOptions, Graph, RngStream, Tensor};
use std::hint::black_box;

fn randn(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = RngStream::new(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.normal() as f32)
}

fn modes() -> Vec<(&'static str, bool)> {
    let mut m = vec![("sequential", false)];
    if parallel::available() {
        m.push(("parallel", true));
    }
    m
}

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv");
    let x2 = randn(&[8, 1, 32, 500], 1);
    let w2 = randn(&[32, 1, 1, 36], 2);
    let x1 = randn(&[8, 64, 500], 3);
    let w1 = randn(&[64, 64, 3], 4);
    for (name, on) in modes() {
        parallel::set_enabled(on);
        group.bench_function(BenchmarkId::new("bridge_temporal_fwd_bwd", name), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let x = g.param(x2.clone());
                let w = g.param(w2.clone());
                let y = g.conv2d(x, w, None, Conv2dOptions::new((1, 36), (0, 2))).unwrap();
                let s = g.sum(y).unwrap();
                g.backward(s).unwrap();
                black_box(g.grad(w).unwrap()[0])
            })
        });
        group.bench_function(BenchmarkId::new("tcn_causal_fwd", name), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let x = g.constant(x1.clone());
                let w = g.constant(w1.clone());
                let y = g.conv1d(x, w, None, Conv1dOptions::causal(3, 4)).unwrap();
                black_box(g.data(y)[0])
            })
        });
    }
    group.finish();
}

fn attention_linear(c: &mut Criterion) {
    let mut group = c.benchmark_group("encoder");
    let q = randn(&[16, 4, 15, 16], 5);
    let x = randn(&[16 * 15, 64], 6);
    let w = randn(&[256, 64], 7);
    for (name, on) in modes() {
        parallel::set_enabled(on);
        group.bench_function(BenchmarkId::new("attention_fwd_bwd", name), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let qv = g.param(q.clone());
                let o = g.attention(qv, qv, qv).unwrap();
                let s = g.sum(o).unwrap();
                g.backward(s).unwrap();
                black_box(g.grad(qv).unwrap()[0])
            })
        });
        group.bench_function(BenchmarkId::new("linear_fwd_bwd", name), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let xv = g.param(x.clone());
                let wv = g.param(w.clone());
                let y = g.linear(xv, wv, None).unwrap();
                let s = g.sum(y).unwrap();
                g.backward(s).unwrap();
                black_box(g.grad(wv).unwrap()[0])
            })
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = conv, attention_linear
}
criterion_main!(benches);

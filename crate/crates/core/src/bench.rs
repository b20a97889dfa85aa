//! Inference latency and the patch-size sweep.
//!
//! Timing runs eval-mode forwards on one thread with the parallel kernels
//! switched off, reuses one graph across repetitions, and reports
//! nearest-rank percentiles over the post-warmup repetitions only. Do not
//! run two benchmarks at the same time; they share the CPU and the
//! process-wide parallel switch.

use std::fmt::Write as _;
use std::time::Instant;

use eegvit_tensor::{parallel, Graph, RngStream, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::flops::estimate_flops;
use crate::model::Model;

pub const MIN_REPETITIONS: usize = 10;
pub const MIN_WARMUP: usize = 3;

/// Patch-projection geometries (kernel, stride) of the default sweep; on
/// 14 bridge columns they give 14, 7, 3 and 1 tokens.
pub const DEFAULT_SWEEP: [(usize, usize); 4] = [(1, 1), (2, 2), (4, 4), (14, 14)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub label: String,
    pub tokens: usize,
    pub flops: u64,
    /// Attention FLOPs quadratic in the token count.
    pub attention_quadratic_flops: u64,
    pub batch: usize,
    pub repetitions: usize,
    pub warmup: usize,
    /// Seconds per batch.
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

impl BenchResult {
    pub fn median_per_sample(&self) -> f64 {
        self.median / self.batch as f64
    }
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 · n)`, counting from 1.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of no samples");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Restores the parallel switch when dropped.
struct Sequential(bool);

impl Sequential {
    fn enter() -> Self {
        let was = parallel::is_enabled();
        parallel::set_enabled(false);
        Self(was)
    }
}

impl Drop for Sequential {
    fn drop(&mut self) {
        parallel::set_enabled(self.0);
    }
}

/// Times `repetitions` eval-mode forwards on a fixed random input of
/// `input_shape` after `warmup` untimed ones.
pub fn measure_latency(model: &Model<f32>, input_shape: [usize; 3], repetitions: usize, warmup: usize) -> Result<BenchResult> {
    if repetitions < MIN_REPETITIONS || warmup < MIN_WARMUP {
        return Err(Error::Config(format!(
            "need at least {MIN_REPETITIONS} repetitions and {MIN_WARMUP} warmup runs, got {repetitions} and {warmup}"
        )));
    }
    let config = model.config();
    let report = estimate_flops(config, input_shape[0])?;
    let mut rng = RngStream::new(0);
    let x = Tensor::from_fn(input_shape.to_vec(), |_| rng.normal() as f32);
    let mut g = Graph::new();
    g.set_validate(false);

    let _guard = Sequential::enter();
    for _ in 0..warmup {
        model.predict_with(&mut g, &x)?;
    }
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let y = model.predict_with(&mut g, &x)?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(y);
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchResult {
        label: format!("k{}s{}", config.patch_projection_kernel, config.patch_projection_stride),
        tokens: report.tokens,
        flops: report.total,
        attention_quadratic_flops: report.attention.quadratic,
        batch: input_shape[0],
        repetitions,
        warmup,
        median: nearest_rank(&times, 50.0),
        p10: nearest_rank(&times, 10.0),
        p90: nearest_rank(&times, 90.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kernel: usize,
    pub stride: usize,
    pub result: BenchResult,
    /// Validation RMSE in mm, when a trained checkpoint for the geometry
    /// was evaluated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_rmse: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub batch: usize,
    pub repetitions: usize,
    pub warmup: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            batch: 8,
            repetitions: 30,
            warmup: 3,
        }
    }
}

/// Builds one model per geometry and measures it, in the given order.
pub fn patch_sweep(base: &ModelConfig, geometries: &[(usize, usize)], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if geometries.is_empty() {
        return Err(Error::Config("empty sweep".into()));
    }
    let mut rows = Vec::with_capacity(geometries.len());
    for &(kernel, stride) in geometries {
        let config = base.clone().with_patch(kernel, stride);
        let model = Model::<f32>::build(config, &RngStream::new(0))?;
        let result = measure_latency(&model, [opts.batch, base.in_channels, base.timepoints], opts.repetitions, opts.warmup)?;
        rows.push(SweepRow {
            kernel,
            stride,
            result,
            val_rmse: None,
        });
    }
    Ok(rows)
}

/// Largest ratio of median latencies over all ordered pairs, as
/// `(slow index, fast index, ratio)`.
pub fn best_speedup(rows: &[SweepRow]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in rows.iter().enumerate() {
            let r = a.result.median / b.result.median;
            if i != j && best.is_none_or(|(_, _, x)| r > x) {
                best = Some((i, j, r));
            }
        }
    }
    best
}

/// Aligned text table, fastest geometry first, with speedups relative to
/// the slowest row.
pub fn format_sweep(rows: &[SweepRow]) -> String {
    let mut order: Vec<&SweepRow> = rows.iter().collect();
    order.sort_by(|a, b| a.result.median.total_cmp(&b.result.median));
    let slowest = rows.iter().map(|r| r.result.median).fold(0.0, f64::max);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<4} {:>6} {:>6} {:>6} {:>14} {:>11} {:>11} {:>11} {:>12} {:>8} {:>9}",
        "rank", "kernel", "stride", "tokens", "GFLOPs", "p10 ms", "median ms", "p90 ms", "ms/sample", "speedup", "val RMSE"
    );
    for (rank, r) in order.iter().enumerate() {
        let b = &r.result;
        let rmse = r.val_rmse.map_or("-".to_string(), |v| format!("{v:.1}"));
        let _ = writeln!(
            out,
            "{:<4} {:>6} {:>6} {:>6} {:>14.4} {:>11.3} {:>11.3} {:>11.3} {:>12.4} {:>7.2}x {:>9}",
            rank + 1,
            r.kernel,
            r.stride,
            b.tokens,
            b.flops as f64 / 1e9,
            b.p10 * 1e3,
            b.median * 1e3,
            b.p90 * 1e3,
            b.median_per_sample() * 1e3,
            slowest / b.median,
            rmse
        );
    }
    out
}

#[derive(Serialize, Deserialize)]
struct SweepFile {
    rows: Vec<SweepRow>,
}

pub fn sweep_to_toml(rows: &[SweepRow]) -> String {
    toml::to_string(&SweepFile { rows: rows.to_vec() }).expect("sweep serializes")
}

pub fn sweep_from_toml(text: &str) -> Result<Vec<SweepRow>> {
    toml::from_str::<SweepFile>(text)
        .map(|f| f.rows)
        .map_err(|e| Error::Config(format!("bad sweep report: {e}")))
}

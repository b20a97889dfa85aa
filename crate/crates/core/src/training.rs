//! Supervised training: MSE loss, Adam, early stopping on validation RMSE,
//! subject-wise split, several seeds.
//!
//! Targets are standardized per axis with the training split's mean and
//! standard deviation; predictions are mapped back to millimetres before
//! any RMSE is computed. RMSE is `sqrt(mean_i (dx_i² + dy_i²))`, the root
//! mean squared Euclidean error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eegvit_tensor::{Element, Graph, Mode, RngStream, Tensor};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, StoredTensor};
use crate::codec::write_atomic;
use crate::config::ModelConfig;
use crate::data::{split_by_subject, DataError, Dataset};
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Fixed subject split for every seed; by default each seed draws its own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            train_fraction: 0.7,
            seeds: vec![1, 2, 3, 4, 5],
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            split_seed: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return bad(format!("seeds must be distinct, got {:?}", self.seeds));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 (batch norm)".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Mean over all elements of `(pred − target)²`.
pub fn mse_loss<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.constant(pred.clone());
    let t = g.constant(target.clone());
    let l = g.mse_loss(p, t)?;
    Ok(g.value(l).item().unwrap().as_f64())
}

/// Root mean squared Euclidean distance between `[B, 2]` tensors.
pub fn rmse_mm<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    if pred.shape() != target.shape() || pred.rank() != 2 || pred.shape()[1] != 2 {
        return Err(Error::Config(format!(
            "rmse needs matching [B, 2] tensors, got {:?} and {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let p: Vec<[f64; 2]> = pred.data().chunks(2).map(|c| [c[0].as_f64(), c[1].as_f64()]).collect();
    let t: Vec<[f64; 2]> = target.data().chunks(2).map(|c| [c[0].as_f64(), c[1].as_f64()]).collect();
    Ok(rmse_points(&p, &t))
}

pub fn rmse_points(pred: &[[f64; 2]], target: &[[f64; 2]]) -> f64 {
    let sq: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .sum();
    (sq / pred.len() as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        TrainConfig::default().adam()
    }
}

/// First and second moments per parameter tensor and the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Element> AdamState<T> {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![T::zero(); n], vec![T::zero(); n])).unzip();
        Self { m, v, t: 0 }
    }
}

/// One bias-corrected Adam update:
/// `m ← β1·m + (1−β1)·g`, `v ← β2·v + (1−β2)·g²`,
/// `θ ← θ − lr · m̂ / (√v̂ + eps)` with `m̂ = m/(1−β1ᵗ)`, `v̂ = v/(1−β2ᵗ)`.
pub fn adam_step<T: Element>(params: &mut [&mut [T]], grads: &[&[T]], state: &mut AdamState<T>, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    assert_eq!(params.len(), state.m.len(), "optimizer state does not match parameters");
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            let gi = g[i].as_f64();
            let mi = cfg.beta1 * m[i].as_f64() + (1.0 - cfg.beta1) * gi;
            let vi = cfg.beta2 * v[i].as_f64() + (1.0 - cfg.beta2) * gi * gi;
            m[i] = T::lit(mi);
            v[i] = T::lit(vi);
            let step = cfg.lr * (mi / bc1) / ((vi / bc2).sqrt() + cfg.eps);
            p[i] = T::lit(p[i].as_f64() - step);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Stop once the best (strictly smallest) value is `patience` or more
/// epochs old.
pub fn early_stop(history: &[f64], patience: usize) -> Decision {
    let mut best = f64::INFINITY;
    let mut best_idx = 0;
    for (i, v) in history.iter().enumerate() {
        if *v < best {
            best = *v;
            best_idx = i;
        }
    }
    if history.len() - 1 - best_idx >= patience {
        Decision::Stop
    } else {
        Decision::Continue
    }
}

/// Incremental form of [`early_stop`].
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epochs: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epochs: 0,
        }
    }

    /// Records one epoch (numbered from 1) and says whether to go on.
    pub fn observe(&mut self, value: f64) -> Decision {
        self.epochs += 1;
        if value < self.best || self.best_epoch == 0 {
            if value < self.best {
                self.best = value;
            }
            self.best_epoch = self.epochs;
        }
        if self.epochs - self.best_epoch >= self.patience {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }

    pub fn improved_last(&self) -> bool {
        self.best_epoch == self.epochs
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Per-axis target standardization fitted on the training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl TargetScaler {
    pub fn fit(ds: &Dataset) -> Self {
        let labels = ds.labels();
        let n = labels.len() as f64;
        let mean = ds.label_mean();
        let mut std = [0.0; 2];
        for l in &labels {
            for a in 0..2 {
                std[a] += (l[a] - mean[a]).powi(2) / n;
            }
        }
        Self {
            mean,
            std: std.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }),
        }
    }

    pub fn identity() -> Self {
        Self {
            mean: [0.0; 2],
            std: [1.0; 2],
        }
    }

    pub fn normalize<T: Element>(&self, y: &Tensor<T>) -> Tensor<T> {
        Tensor::from_fn(y.shape().to_vec(), |i| {
            let a = i % 2;
            T::lit((y.data()[i].as_f64() - self.mean[a]) / self.std[a])
        })
    }

    pub fn denormalize(&self, y: [f64; 2]) -> [f64; 2] {
        [y[0] * self.std[0] + self.mean[0], y[1] * self.std[1] + self.mean[1]]
    }
}

/// Eval-mode predictions in millimetres for every sample of `ds`.
pub fn predict_mm<T: Element>(model: &Model<T>, ds: &Dataset, scaler: &TargetScaler, batch: usize) -> Result<Vec<[f64; 2]>> {
    let mut g = Graph::new();
    let mut out = Vec::with_capacity(ds.len());
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, _) = ds.batch::<T>(chunk);
        let y = model.predict_with(&mut g, &x)?;
        for p in y.data().chunks(2) {
            let mm = scaler.denormalize([p[0].as_f64(), p[1].as_f64()]);
            if !mm.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("prediction is not finite".into()));
            }
            out.push(mm);
        }
    }
    Ok(out)
}

pub fn evaluate_rmse<T: Element>(model: &Model<T>, ds: &Dataset, scaler: &TargetScaler, batch: usize) -> Result<f64> {
    Ok(rmse_points(&predict_mm(model, ds, scaler, batch)?, &ds.labels()))
}

/// RMSE of always predicting `mean`.
pub fn naive_rmse(ds: &Dataset, mean: [f64; 2]) -> f64 {
    let labels = ds.labels();
    rmse_points(&vec![mean; labels.len()], &labels)
}

/// Mini-batches of a shuffled order; a trailing batch of one sample is
/// merged into the previous batch so batch norm always sees two samples.
pub fn make_batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub best_val_rmse: f64,
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub wall_seconds: f64,
    /// Validation RMSE of predicting the training-set mean label.
    pub naive_rmse: f64,
    pub history: Vec<f64>,
    pub train_subjects: Vec<u32>,
    pub val_subjects: Vec<u32>,
}

impl SeedReport {
    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &Self) -> bool {
        Self {
            wall_seconds: 0.0,
            ..self.clone()
        } == Self {
            wall_seconds: 0.0,
            ..other.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad seed report: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub runs: Vec<SeedReport>,
    pub failures: Vec<SeedFailure>,
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// On-disk report layout; key set is stable.
#[derive(Serialize, Deserialize)]
struct ReportFile {
    per_seed_rmse: Vec<f64>,
    mean: f64,
    std: f64,
    epochs: Vec<usize>,
    wall_seconds: Vec<f64>,
    seeds: Vec<u64>,
    best_epochs: Vec<usize>,
    naive_rmse: Vec<f64>,
    #[serde(default)]
    failures: Vec<SeedFailure>,
    #[serde(default)]
    runs: Vec<SeedReport>,
}

impl RunReport {
    pub fn from_runs(runs: Vec<SeedReport>, failures: Vec<SeedFailure>) -> Self {
        let (mean, std) = mean_std(&runs.iter().map(|r| r.best_val_rmse).collect::<Vec<_>>());
        Self {
            runs,
            failures,
            mean,
            std,
        }
    }

    pub fn per_seed_rmse(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.best_val_rmse).collect()
    }

    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &Self) -> bool {
        self.runs.len() == other.runs.len()
            && self.runs.iter().zip(&other.runs).all(|(a, b)| a.same_result(b))
            && self.failures == other.failures
            && self.mean.to_bits() == other.mean.to_bits()
            && self.std.to_bits() == other.std.to_bits()
    }

    pub fn to_toml(&self) -> String {
        let file = ReportFile {
            per_seed_rmse: self.per_seed_rmse(),
            mean: self.mean,
            std: self.std,
            epochs: self.runs.iter().map(|r| r.stop_epoch).collect(),
            wall_seconds: self.runs.iter().map(|r| r.wall_seconds).collect(),
            seeds: self.runs.iter().map(|r| r.seed).collect(),
            best_epochs: self.runs.iter().map(|r| r.best_epoch).collect(),
            naive_rmse: self.runs.iter().map(|r| r.naive_rmse).collect(),
            failures: self.failures.clone(),
            runs: self.runs.clone(),
        };
        toml::to_string(&file).expect("report serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: ReportFile = toml::from_str(text).map_err(|e| Error::Config(format!("bad report: {e}")))?;
        Ok(Self {
            runs: f.runs,
            failures: f.failures,
            mean: f.mean,
            std: f.std,
        })
    }

    pub fn summary(&self) -> String {
        format!("{:.1} ± {:.1} mm over {} seed(s)", self.mean, self.std, self.runs.len())
    }
}

/// Progress of one epoch, for callers that print or log.
#[derive(Clone, Debug)]
pub struct EpochLog {
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
    pub best: bool,
}

/// A finished seed: its report, the restored best model and the target
/// scaling it was trained with.
pub struct TrainedRun {
    pub report: SeedReport,
    pub model: Model<f32>,
    pub scaler: TargetScaler,
}

pub const TARGET_MEAN: &str = "meta.target_mean";
pub const TARGET_STD: &str = "meta.target_std";

impl TargetScaler {
    pub fn insert_into(&self, c: &mut Checkpoint) {
        c.insert(TARGET_MEAN, Tensor::from_vec(vec![2], self.mean.to_vec()).unwrap());
        c.insert(TARGET_STD, Tensor::from_vec(vec![2], self.std.to_vec()).unwrap());
    }

    /// Identity scaling when the checkpoint carries none.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let read = |name: &str| -> Result<Option<[f64; 2]>> {
            match c.get(name) {
                None => Ok(None),
                Some(StoredTensor::F64(t)) if t.shape() == [2] => Ok(Some([t.data()[0], t.data()[1]])),
                Some(_) => Err(Error::Config(format!("'{name}' must be an f64 tensor of shape [2]"))),
            }
        };
        match (read(TARGET_MEAN)?, read(TARGET_STD)?) {
            (Some(mean), Some(std)) => Ok(Self { mean, std }),
            (None, None) => Ok(Self::identity()),
            _ => Err(Error::Config("checkpoint has only half of the target scaling".into())),
        }
    }
}

impl TrainedRun {
    /// Best weights plus the target scaling as `meta.*` tensors.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = self.model.export_weights();
        self.scaler.insert_into(&mut c);
        c
    }
}

/// Where the model config of a saved checkpoint lives: `<file>.toml`.
pub fn config_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".toml");
    PathBuf::from(name)
}

/// Writes weights and scaling to `path` and the model config next to it.
pub fn save_trained(path: &Path, model: &Model<f32>, scaler: &TargetScaler) -> Result<()> {
    let mut c = model.export_weights();
    scaler.insert_into(&mut c);
    write_atomic(&config_sidecar(path), model.config().to_toml().as_bytes())?;
    c.write(path)
}

/// Loads a checkpoint written by [`save_trained`]. The model config comes
/// from the sidecar when present, else from `fallback`.
pub fn load_trained(path: &Path, fallback: Option<&ModelConfig>) -> Result<(Model<f32>, TargetScaler)> {
    let ckpt = Checkpoint::read(path)?;
    let sidecar = config_sidecar(path);
    let mut config = if sidecar.exists() {
        ModelConfig::from_toml(&fs::read_to_string(&sidecar)?)?
    } else {
        fallback
            .cloned()
            .ok_or_else(|| Error::Config(format!("no model config: {} is missing", sidecar.display())))?
    };
    // the weights are complete, so a warm start would only be overwritten
    config.ablation.warm_start = None;
    let mut model = Model::<f32>::build(config, &RngStream::new(0))?;
    model.import_weights(&ckpt, true)?;
    Ok((model, TargetScaler::from_checkpoint(&ckpt)?))
}

const INIT_STREAM: u64 = 1;
const EPOCH_STREAM: u64 = 1 << 32;
const EVAL_BATCH: usize = 64;

/// Trains one seed: fresh model, subject split, epoch loop, early stopping,
/// best-weight restoration. With a learning rate of 0 the batch-norm
/// statistics are frozen too, so the model does not change at all.
pub fn train_seed(
    model_config: &ModelConfig,
    ds: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainedRun> {
    cfg.validate()?;
    model_config.validate()?;
    if ds.channels() != model_config.in_channels || ds.timepoints() != model_config.timepoints {
        return Err(Error::Config(format!(
            "dataset is {}×{} but the model expects {}×{}",
            ds.channels(),
            ds.timepoints(),
            model_config.in_channels,
            model_config.timepoints
        )));
    }
    let started = Instant::now();
    let (train, val) = split_by_subject(ds, cfg.train_fraction, cfg.split_seed.unwrap_or(seed))?;
    let train_subjects = train.subjects();
    let val_subjects = val.subjects();
    if !train_subjects.is_disjoint(&val_subjects) {
        return Err(DataError::Split("train and validation subjects overlap".into()).into());
    }
    if train.len() < 2 {
        return Err(Error::Config("training split has fewer than 2 samples".into()));
    }

    let root = RngStream::new(seed);
    let mut model = Model::<f32>::build(model_config.clone(), &root.fork(INIT_STREAM))?;
    let scaler = TargetScaler::fit(&train);
    let naive = naive_rmse(&val, train.label_mean());
    let adam_cfg = cfg.adam();
    let mut adam = AdamState::<f32>::new(model.params().values().map(Tensor::numel));
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best_model = model.clone();
    let mut history = Vec::new();
    let mut g = Graph::new();

    for epoch in 1..=cfg.max_epochs {
        let mut rng = root.fork(EPOCH_STREAM + epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let batches = make_batches(&order, cfg.batch_size);
        for idx in &batches {
            let (x, y) = train.batch::<f32>(idx);
            let y = scaler.normalize(&y);
            g.clear();
            let b = model.bind(&mut g, true);
            let xv = g.constant(x);
            let yv = g.constant(y);
            let (out, stats) = model.forward_graph(&mut g, &b, xv, Mode::Train, &mut rng)?;
            let loss = g.mse_loss(out, yv)?;
            let lv = g.value(loss).item().unwrap().as_f64();
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("seed {seed}: loss {lv} at epoch {epoch}")));
            }
            loss_sum += lv;
            g.backward(loss)?;
            let grads: Vec<&[f32]> = b
                .vars()
                .iter()
                .map(|v| g.grad(*v).expect("parameters receive gradients"))
                .collect();
            let mut params: Vec<&mut [f32]> = model.params_mut().map(|(_, t)| t.data_mut()).collect();
            adam_step(&mut params, &grads, &mut adam, &adam_cfg);
            if cfg.learning_rate > 0.0 {
                if let Some(s) = stats {
                    model.set_running_stats(s);
                }
            }
        }
        let val_rmse = evaluate_rmse(&model, &val, &scaler, EVAL_BATCH)
            .map_err(|e| Error::NonFinite(format!("seed {seed}: validation at epoch {epoch}: {e}")))?;
        history.push(val_rmse);
        let decision = stopper.observe(val_rmse);
        if stopper.improved_last() {
            best_model = model.clone();
        }
        on_epoch(&EpochLog {
            seed,
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            val_rmse,
            best: stopper.improved_last(),
        });
        if decision == Decision::Stop {
            break;
        }
    }

    let report = SeedReport {
        seed,
        best_val_rmse: stopper.best(),
        best_epoch: stopper.best_epoch(),
        stop_epoch: history.len(),
        wall_seconds: started.elapsed().as_secs_f64(),
        naive_rmse: naive,
        history,
        train_subjects: train_subjects.into_iter().collect(),
        val_subjects: val_subjects.into_iter().collect(),
    };
    Ok(TrainedRun {
        report,
        model: best_model,
        scaler,
    })
}

/// Runs every seed of `cfg`. A numeric failure only drops that seed; any
/// other error aborts. Fails if no seed finishes.
pub fn train(model_config: &ModelConfig, ds: &Dataset, cfg: &TrainConfig) -> Result<RunReport> {
    train_with(model_config, ds, cfg, &mut |_| {})
}

pub fn train_with(
    model_config: &ModelConfig,
    ds: &Dataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<RunReport> {
    cfg.validate()?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &seed in &cfg.seeds {
        match train_seed(model_config, ds, cfg, seed, on_epoch) {
            Ok(r) => runs.push(r.report),
            Err(Error::NonFinite(message)) => failures.push(SeedFailure { seed, message }),
            Err(e) => return Err(e),
        }
    }
    if runs.is_empty() {
        let msgs: Vec<String> = failures.iter().map(|f| f.message.clone()).collect();
        return Err(Error::NonFinite(msgs.join("; ")));
    }
    Ok(RunReport::from_runs(runs, failures))
}

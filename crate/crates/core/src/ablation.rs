//! The ablation grid: eight model variants, each trained over the same
//! seeds, summarized as mean ± std RMSE.
//!
//! | variant | row label | change |
//! |---|---|---|
//! | `full` | EEGViT-TCNet | none |
//! | `no_pointwise` | No Pointwise Conv Layer | `remove_pointwise_conv` |
//! | `no_temporal` | No Temporal Conv Layer | `remove_temporal_conv` |
//! | `no_spatial` | No Spatial Conv Layer | `remove_spatial_conv` |
//! | `dropout_0` | 0% Dropout | `tcn_dropout_override = 0` |
//! | `dropout_25` | 25% Dropout | `tcn_dropout_override = 0.25` |
//! | `dropout_50` | 50% Dropout | `tcn_dropout_override = 0.5` |
//! | `cold_start` | No Pretrained ViT | `warm_start` cleared |
//!
//! Every (variant, seed) cell is cached under a directory as
//! `<variant>-s<seed>-<key>.report` (TOML) plus `.ntar` (best weights),
//! where `key` is a SHA-256 prefix over the applied model config, the
//! training config, the seed, the dataset digest and the warm-start file
//! contents. The weights are written first and the report last, each
//! atomically, so a report on disk always marks a finished cell.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::write_atomic;
use crate::config::ModelConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::training::{train_seed, RunReport, SeedFailure, SeedReport, TrainConfig, TrainedRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Full,
    NoPointwise,
    NoTemporal,
    NoSpatial,
    Dropout0,
    Dropout25,
    Dropout50,
    ColdStart,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Full,
        Variant::NoPointwise,
        Variant::NoTemporal,
        Variant::NoSpatial,
        Variant::Dropout0,
        Variant::Dropout25,
        Variant::Dropout50,
        Variant::ColdStart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPointwise => "no_pointwise",
            Variant::NoTemporal => "no_temporal",
            Variant::NoSpatial => "no_spatial",
            Variant::Dropout0 => "dropout_0",
            Variant::Dropout25 => "dropout_25",
            Variant::Dropout50 => "dropout_50",
            Variant::ColdStart => "cold_start",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant '{name}' (known: {})", known.join(", ")))
            })
    }

    pub fn row_label(self) -> &'static str {
        match self {
            Variant::Full => "EEGViT-TCNet",
            Variant::NoPointwise => "No Pointwise Conv Layer",
            Variant::NoTemporal => "No Temporal Conv Layer",
            Variant::NoSpatial => "No Spatial Conv Layer",
            Variant::Dropout0 => "0% Dropout",
            Variant::Dropout25 => "25% Dropout",
            Variant::Dropout50 => "50% Dropout",
            Variant::ColdStart => "No Pretrained ViT",
        }
    }

    /// Published full-scale result (mean, std) in mm, for comparison only.
    pub fn reference_rmse(self) -> (f64, f64) {
        match self {
            Variant::Full => (51.8, 0.6),
            Variant::NoPointwise => (52.5, 0.8),
            Variant::NoTemporal => (55.0, 0.5),
            Variant::NoSpatial => (55.1, 0.6),
            Variant::Dropout0 => (54.1, 0.6),
            Variant::Dropout25 => (52.5, 0.4),
            Variant::Dropout50 => (52.1, 0.4),
            Variant::ColdStart => (53.2, 0.5),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn apply_variant(base: &ModelConfig, v: Variant) -> Result<ModelConfig> {
    base.validate()?;
    let mut c = base.clone();
    let a = &mut c.ablation;
    match v {
        Variant::Full => {}
        Variant::NoPointwise => a.remove_pointwise_conv = true,
        Variant::NoTemporal => a.remove_temporal_conv = true,
        Variant::NoSpatial => a.remove_spatial_conv = true,
        Variant::Dropout0 => a.tcn_dropout_override = Some(0.0),
        Variant::Dropout25 => a.tcn_dropout_override = Some(0.25),
        Variant::Dropout50 => a.tcn_dropout_override = Some(0.5),
        Variant::ColdStart => a.warm_start = None,
    }
    c.validate()?;
    Ok(c)
}

#[derive(Clone, Debug, Default)]
pub struct GridOptions {
    pub cache_dir: Option<PathBuf>,
    /// Worker threads; 1 runs the cells in order on the calling thread.
    pub jobs: usize,
}

#[derive(Clone, Debug)]
pub enum CellEvent {
    Cached { variant: Variant, seed: u64 },
    Finished { variant: Variant, seed: u64, rmse: f64 },
    Failed { variant: Variant, seed: u64, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    /// `None` when every seed of the variant failed.
    pub report: Option<RunReport>,
    pub failures: Vec<SeedFailure>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CellFile {
    variant: String,
    seed: u64,
    key: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<SeedReport>,
}

type CellOutcome = std::result::Result<SeedReport, String>;

/// Content hash naming a cell; the seed list of `train` is replaced by the
/// cell's own seed so that growing the seed list reuses finished cells.
pub fn cell_key(config: &ModelConfig, train: &TrainConfig, seed: u64, dataset_digest: &str) -> Result<String> {
    let mut h = Sha256::new();
    h.update(config.to_toml().as_bytes());
    h.update([0]);
    let single = TrainConfig {
        seeds: vec![seed],
        ..train.clone()
    };
    h.update(single.to_toml().as_bytes());
    h.update([0]);
    h.update(dataset_digest.as_bytes());
    if let Some(path) = &config.ablation.warm_start {
        h.update([0]);
        h.update(fs::read(path)?);
    }
    Ok(hex::encode(&h.finalize()[..8]))
}

fn cell_paths(dir: &Path, v: Variant, seed: u64, key: &str) -> (PathBuf, PathBuf) {
    let stem = format!("{}-s{seed}-{key}", v.name());
    (dir.join(format!("{stem}.report")), dir.join(format!("{stem}.ntar")))
}

fn read_cell(dir: &Path, v: Variant, seed: u64, key: &str) -> Option<CellOutcome> {
    let (report, weights) = cell_paths(dir, v, seed, key);
    let cell: CellFile = toml::from_str(&fs::read_to_string(report).ok()?).ok()?;
    if cell.key != key || cell.seed != seed || cell.variant != v.name() {
        return None;
    }
    match (cell.report, cell.failure) {
        (Some(r), None) if weights.exists() => Some(Ok(r)),
        (None, Some(msg)) => Some(Err(msg)),
        _ => None,
    }
}

fn write_cell(dir: &Path, v: Variant, seed: u64, key: &str, outcome: &CellOutcome, run: Option<&TrainedRun>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (report, weights) = cell_paths(dir, v, seed, key);
    if let Some(run) = run {
        run.checkpoint().write(&weights)?;
    }
    let cell = CellFile {
        variant: v.name().into(),
        seed,
        key: key.into(),
        failure: outcome.as_ref().err().cloned(),
        report: outcome.as_ref().ok().cloned(),
    };
    let text = toml::to_string(&cell).expect("cell serializes");
    Ok(write_atomic(&report, text.as_bytes())?)
}

struct Cell {
    variant: Variant,
    config: Result<ModelConfig>,
    seed: u64,
}

/// Trains every (variant, seed) cell not already cached and assembles the
/// table. Errors inside a cell are recorded as failures of that cell;
/// only cache I/O errors abort the grid.
pub fn run_grid(
    base: &ModelConfig,
    ds: &Dataset,
    train: &TrainConfig,
    variants: &[Variant],
    opts: &GridOptions,
    on_cell: &(dyn Fn(&CellEvent) + Sync),
) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::Config("no variants selected".into()));
    }
    train.validate()?;
    let digest = ds.digest();
    let cells: Vec<Cell> = variants
        .iter()
        .flat_map(|&v| {
            let config = apply_variant(base, v);
            train.seeds.iter().map(move |&seed| Cell {
                variant: v,
                config: config.as_ref().map(Clone::clone).map_err(|e| Error::Config(e.to_string())),
                seed,
            })
        })
        .collect();

    let run_cell = |cell: &Cell| -> Result<CellOutcome> {
        let (v, seed) = (cell.variant, cell.seed);
        let config = match &cell.config {
            Ok(c) => c,
            Err(e) => {
                let message = e.to_string();
                on_cell(&CellEvent::Failed { variant: v, seed, message: message.clone() });
                return Ok(Err(message));
            }
        };
        let key = match cell_key(config, train, seed, &digest) {
            Ok(k) => k,
            Err(e) => return Ok(Err(e.to_string())),
        };
        if let Some(dir) = &opts.cache_dir {
            if let Some(hit) = read_cell(dir, v, seed, &key) {
                on_cell(&CellEvent::Cached { variant: v, seed });
                return Ok(hit);
            }
        }
        let (outcome, run) = match train_seed(config, ds, train, seed, &mut |_| {}) {
            Ok(run) => (Ok(run.report.clone()), Some(run)),
            Err(e) => (Err(e.to_string()), None),
        };
        match &outcome {
            Ok(r) => on_cell(&CellEvent::Finished { variant: v, seed, rmse: r.best_val_rmse }),
            Err(m) => on_cell(&CellEvent::Failed { variant: v, seed, message: m.clone() }),
        }
        if let Some(dir) = &opts.cache_dir {
            write_cell(dir, v, seed, &key, &outcome, run.as_ref())?;
        }
        Ok(outcome)
    };

    let outcomes: Vec<CellOutcome> = if opts.jobs <= 1 {
        cells.iter().map(run_cell).collect::<Result<_>>()?
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<CellOutcome>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..opts.jobs.min(cells.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= cells.len() {
                        break;
                    }
                    let r = run_cell(&cells[i]);
                    slots.lock().unwrap()[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|r| r.expect("every cell ran"))
            .collect::<Result<_>>()?
    };

    let mut rows = Vec::with_capacity(variants.len());
    let per = train.seeds.len();
    for (i, &variant) in variants.iter().enumerate() {
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for (cell, outcome) in cells[i * per..(i + 1) * per].iter().zip(&outcomes[i * per..(i + 1) * per]) {
            match outcome {
                Ok(r) => runs.push(r.clone()),
                Err(message) => failures.push(SeedFailure {
                    seed: cell.seed,
                    message: message.clone(),
                }),
            }
        }
        let report = (!runs.is_empty()).then(|| RunReport::from_runs(runs, failures.clone()));
        rows.push(AblationRow { variant, report, failures });
    }
    Ok(AblationTable { rows })
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    rows: Vec<TableFileRow>,
}

#[derive(Serialize, Deserialize)]
struct TableFileRow {
    variant: String,
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    std: Option<f64>,
    per_seed_rmse: Vec<f64>,
    seeds: Vec<u64>,
    failed_seeds: Vec<u64>,
}

impl AblationTable {
    /// Two columns, like the published table: variation and RMSE.
    pub fn format(&self) -> String {
        let width = self.rows.iter().map(|r| r.variant.row_label().len()).max().unwrap_or(0).max(15);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {}", "Model Variation", "RMSE (mm)");
        let _ = writeln!(out, "{:-<width$}  {:-<13}", "", "");
        for r in &self.rows {
            let cell = match &r.report {
                Some(rep) if r.failures.is_empty() => format!("{:.1} ± {:.1}", rep.mean, rep.std),
                Some(rep) => format!("{:.1} ± {:.1} ({} failed)", rep.mean, rep.std, r.failures.len()),
                None => "failed".to_string(),
            };
            let _ = writeln!(out, "{:<width$}  {cell}", r.variant.row_label());
        }
        out
    }

    pub fn to_toml(&self) -> String {
        let rows = self
            .rows
            .iter()
            .map(|r| TableFileRow {
                variant: r.variant.name().into(),
                label: r.variant.row_label().into(),
                mean: r.report.as_ref().map(|x| x.mean),
                std: r.report.as_ref().map(|x| x.std),
                per_seed_rmse: r.report.as_ref().map(RunReport::per_seed_rmse).unwrap_or_default(),
                seeds: r.report.iter().flat_map(|x| x.runs.iter().map(|s| s.seed)).collect(),
                failed_seeds: r.failures.iter().map(|f| f.seed).collect(),
            })
            .collect();
        toml::to_string(&TableFile { rows }).expect("table serializes")
    }

    /// Every row has a result for every seed and a finite, non-negative
    /// spread.
    pub fn is_complete(&self, seeds: usize) -> bool {
        self.rows.iter().all(|r| {
            r.failures.is_empty()
                && r.report.as_ref().is_some_and(|rep| {
                    rep.runs.len() == seeds && rep.mean.is_finite() && rep.std.is_finite() && rep.std >= 0.0
                })
        })
    }

    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.variant == b.variant
                    && a.failures == b.failures
                    && match (&a.report, &b.report) {
                        (Some(x), Some(y)) => x.same_result(y),
                        (None, None) => true,
                        _ => false,
                    }
            })
    }
}

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use eegvit::ablation::{run_grid, CellEvent, GridOptions, Variant};
use eegvit::bench::{best_speedup, format_sweep, patch_sweep, sweep_to_toml, SweepOptions, DEFAULT_SWEEP};
use eegvit::checkpoint::{Checkpoint, StoredTensor};
use eegvit::data::{generate_synthetic, ingest_matrix_export, read_dataset, split_by_subject, write_dataset};
use eegvit::flops::estimate_flops;
use eegvit::gradcheck::{model_check, op_suite, CheckLine};
use eegvit::model::{BN_RUNNING_MEAN, BN_RUNNING_VAR, META_PREFIX};
use eegvit::training::{evaluate_rmse, load_trained, naive_rmse, save_trained, train_seed, RunReport, SeedFailure};
use eegvit::{Dataset, Error, ModelConfig};
use serde::Serialize;

use crate::args::{AblateArgs, BenchArgs, EvalArgs, GenDataArgs, GradcheckArgs, InspectArgs, TrainArgs};
use crate::settings::{
    load_file, parse_geometry, resolve_model, resolve_train, resolve_train_model, DataSection, Resolved,
};

/// A run finished and wrote its outputs, but something diverged or failed
/// a numeric check.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "numeric failure: {}", self.0)
    }
}

impl std::error::Error for NumericFailure {}

fn write_out(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(path: &Path) -> Result<Dataset> {
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let file = load_file(a.config.as_deref())?;
    let mut d = DataSection::from_file(&file)?;
    d.subjects = a.subjects.unwrap_or(d.subjects);
    d.trials = a.trials.unwrap_or(d.trials);
    d.channels = a.channels.unwrap_or(d.channels);
    d.timepoints = a.timepoints.unwrap_or(d.timepoints);
    d.noise_std = a.noise.unwrap_or(d.noise_std);
    d.gain_jitter = a.gain_jitter.unwrap_or(d.gain_jitter);
    d.seed = a.seed.unwrap_or(d.seed);

    let resolved = Resolved::new("gen-data").path("out", Some(&a.out));
    let ds = match (&a.import_signals, &a.import_labels) {
        (Some(s), Some(l)) => {
            resolved
                .path("import_signals", Some(s))
                .path("import_labels", Some(l))
                .print();
            ingest_matrix_export(s, l)?
        }
        _ => {
            resolved.section("data", &d).print();
            generate_synthetic(&d.spec()).map_err(Error::from)?
        }
    };
    write_dataset(&ds, &a.out)?;
    println!(
        "wrote {}: {} trials, {} subjects, {} channels x {} samples, digest {}",
        a.out.display(),
        ds.len(),
        ds.subjects().len(),
        ds.channels(),
        ds.timepoints(),
        ds.digest()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let file = load_file(a.flags.config.as_deref())?;
    let mut model = resolve_train_model(&file, &a.flags)?;
    if let Some(v) = &a.variant {
        model = eegvit::ablation::apply_variant(&model, Variant::from_name(v)?)?;
    }
    let cfg = resolve_train(&file, &a.flags)?;
    Resolved::new("train")
        .path("data", Some(&a.data))
        .path("out", Some(&a.out))
        .path("save_dir", a.save_dir.as_deref())
        .section("model", &model)
        .section("train", &cfg)
        .print();

    let ds = load_data(&a.data)?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let quiet = a.quiet;
    for &seed in &cfg.seeds {
        let mut log = |e: &eegvit::training::EpochLog| {
            if !quiet {
                eprintln!(
                    "seed {} epoch {:>3}  train loss {:.4}  val RMSE {:.2} mm{}",
                    e.seed,
                    e.epoch,
                    e.train_loss,
                    e.val_rmse,
                    if e.best { "  *" } else { "" }
                );
            }
        };
        match train_seed(&model, &ds, &cfg, seed, &mut log) {
            Ok(run) => {
                if let Some(dir) = &a.save_dir {
                    fs::create_dir_all(dir)?;
                    save_trained(&dir.join(format!("seed-{seed}.ntar")), &run.model, &run.scaler)?;
                }
                println!(
                    "seed {seed}: best val RMSE {:.2} mm at epoch {} (mean predictor {:.2} mm)",
                    run.report.best_val_rmse, run.report.best_epoch, run.report.naive_rmse
                );
                runs.push(run.report);
            }
            Err(Error::NonFinite(message)) => {
                eprintln!("seed {seed}: {message}");
                failures.push(SeedFailure { seed, message });
            }
            Err(e) => return Err(e.into()),
        }
    }
    if runs.is_empty() {
        return Err(NumericFailure("every seed diverged".into()).into());
    }
    let report = RunReport::from_runs(runs, failures);
    write_out(&a.out, &report.to_toml())?;
    println!("RMSE {} -> {}", report.summary(), a.out.display());
    if !report.failures.is_empty() {
        return Err(NumericFailure(format!("{} seed(s) diverged", report.failures.len())).into());
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    rmse: f64,
    naive_rmse: f64,
    samples: usize,
    subjects: Vec<u32>,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    Resolved::new("eval")
        .path("model", Some(&a.model))
        .path("data", Some(&a.data))
        .set("split_seed", a.split_seed.map_or("none".to_string(), |s| s.to_string()))
        .set("train_fraction", a.train_fraction)
        .set("batch_size", a.batch_size as i64)
        .path("out", a.out.as_deref())
        .print();
    let (model, scaler) = load_trained(&a.model, None)?;
    let mut ds = load_data(&a.data)?;
    if let Some(seed) = a.split_seed {
        ds = split_by_subject(&ds, a.train_fraction, seed).map_err(Error::from)?.1;
    }
    let rmse = evaluate_rmse(&model, &ds, &scaler, a.batch_size.max(1))?;
    let report = EvalReport {
        rmse,
        naive_rmse: naive_rmse(&ds, scaler.mean),
        samples: ds.len(),
        subjects: ds.subjects().into_iter().collect(),
    };
    println!(
        "RMSE {:.2} mm on {} trials from {} subjects (mean predictor {:.2} mm)",
        report.rmse,
        report.samples,
        report.subjects.len(),
        report.naive_rmse
    );
    if let Some(out) = &a.out {
        write_out(out, &toml::to_string(&report)?)?;
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let file = load_file(a.config.as_deref())?;
    let base = resolve_model(&file, a.preset.as_deref(), "bench")?;
    let geometries: Vec<(usize, usize)> = if a.sweep == "default" {
        DEFAULT_SWEEP.to_vec()
    } else {
        a.sweep.split(',').map(parse_geometry).collect::<eegvit::Result<_>>()?
    };
    let checkpoints = a
        .checkpoint
        .iter()
        .map(|c| {
            let (geom, path) = c
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad --checkpoint '{c}', expected K:S=PATH")))?;
            Ok((parse_geometry(geom)?, Path::new(path).to_path_buf()))
        })
        .collect::<eegvit::Result<Vec<_>>>()?;
    let opts = SweepOptions {
        batch: a.batch,
        repetitions: a.reps,
        warmup: a.warmup,
    };
    let sweep: Vec<String> = geometries.iter().map(|(k, s)| format!("{k}:{s}")).collect();
    Resolved::new("bench")
        .set("sweep", sweep)
        .set("batch", a.batch as i64)
        .set("reps", a.reps as i64)
        .set("warmup", a.warmup as i64)
        .path("data", a.data.as_deref())
        .path("out", a.out.as_deref())
        .section("model", &base)
        .print();

    let mut rows = patch_sweep(&base, &geometries, &opts)?;
    if let Some(data) = &a.data {
        let ds = load_data(data)?;
        for ((k, s), path) in &checkpoints {
            let row = rows
                .iter_mut()
                .find(|r| (r.kernel, r.stride) == (*k, *s))
                .ok_or_else(|| Error::Config(format!("checkpoint geometry {k}:{s} is not in the sweep")))?;
            let (model, scaler) = load_trained(path, None)?;
            if model.config().token_count() != Some(row.result.tokens) {
                return Err(Error::Config(format!("{} does not have geometry {k}:{s}", path.display())).into());
            }
            row.val_rmse = Some(evaluate_rmse(&model, &ds, &scaler, 64)?);
        }
    }
    print!("{}", format_sweep(&rows));
    for w in rows.windows(2) {
        let (a, b) = (&w[0].result, &w[1].result);
        if b.attention_quadratic_flops > 0 {
            println!(
                "{} -> {} tokens: quadratic attention FLOPs ratio {:.3}",
                a.tokens,
                b.tokens,
                a.attention_quadratic_flops as f64 / b.attention_quadratic_flops as f64
            );
        }
    }
    if let Some((slow, fast, ratio)) = best_speedup(&rows) {
        println!(
            "largest speedup: k{}s{} over k{}s{}: {ratio:.2}x per batch of {}, {ratio:.2}x per sample",
            rows[fast].kernel, rows[fast].stride, rows[slow].kernel, rows[slow].stride, a.batch
        );
    }
    if let Some(out) = &a.out {
        write_out(out, &sweep_to_toml(&rows))?;
    }
    Ok(())
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let file = load_file(a.flags.config.as_deref())?;
    let base = resolve_train_model(&file, &a.flags)?;
    let cfg = resolve_train(&file, &a.flags)?;
    let variants: Vec<Variant> = match &a.variants {
        Some(list) => list.split(',').map(|v| Variant::from_name(v.trim())).collect::<eegvit::Result<_>>()?,
        None => Variant::ALL.to_vec(),
    };
    if a.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()).into());
    }
    let names: Vec<&str> = variants.iter().map(|v| v.name()).collect();
    let cache = (!a.no_cache).then_some(a.cache.as_path());
    Resolved::new("ablate")
        .path("data", Some(&a.data))
        .set("variants", names)
        .set("jobs", a.jobs as i64)
        .path("cache", cache)
        .path("out", a.out.as_deref())
        .section("model", &base)
        .section("train", &cfg)
        .print();

    let ds = load_data(&a.data)?;
    let opts = GridOptions {
        cache_dir: cache.map(Path::to_path_buf),
        jobs: a.jobs,
    };
    let table = run_grid(&base, &ds, &cfg, &variants, &opts, &|e| match e {
        CellEvent::Cached { variant, seed } => eprintln!("{variant} seed {seed}: cached"),
        CellEvent::Finished { variant, seed, rmse } => eprintln!("{variant} seed {seed}: {rmse:.2} mm"),
        CellEvent::Failed { variant, seed, message } => eprintln!("{variant} seed {seed}: {message}"),
    })?;
    print!("{}", table.format());
    println!("\nPublished full-scale reference:");
    for v in &variants {
        let (m, s) = v.reference_rmse();
        println!("  {:<24} {m:.1} ± {s:.1}", v.row_label());
    }
    if let Some(out) = &a.out {
        write_out(out, &table.to_toml())?;
    }
    let failed: Vec<&SeedFailure> = table.rows.iter().flat_map(|r| &r.failures).collect();
    if failed.is_empty() {
        Ok(())
    } else if failed.iter().all(|f| f.message.starts_with("numeric failure")) {
        Err(NumericFailure(format!("{} cell(s) diverged", failed.len())).into())
    } else {
        Err(Error::Config(format!("{} cell(s) failed: {}", failed.len(), failed[0].message)).into())
    }
}

#[derive(Serialize)]
struct GradcheckFile {
    checks: Vec<GradcheckRow>,
}

#[derive(Serialize)]
struct GradcheckRow {
    name: String,
    max_rel_err: f64,
    tolerance: f64,
    checked: i64,
    passed: bool,
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    if a.scale != "desk" && a.scale != "ops" {
        return Err(Error::Config(format!("unknown scale '{}' (expected desk or ops)", a.scale)).into());
    }
    Resolved::new("gradcheck")
        .set("scale", a.scale.clone())
        .set("coords", a.coords as i64)
        .set("seed", a.seed as i64)
        .path("out", a.out.as_deref())
        .print();
    let mut lines: Vec<CheckLine> = op_suite()?;
    if a.scale == "desk" {
        let mut config = ModelConfig::desk();
        // a shorter window keeps the 64-bit model quick; the layer stack is unchanged
        config.timepoints = 32;
        lines.push(model_check(&config, 3, a.coords, a.seed)?);
    }
    println!("{:<24} {:>12} {:>10} {:>8} {:>8}", "check", "max rel err", "tolerance", "coords", "result");
    for l in &lines {
        println!(
            "{:<24} {:>12.3e} {:>10.0e} {:>8} {:>8}",
            l.name,
            l.max_rel_err,
            l.tolerance,
            l.checked,
            if l.passed() { "ok" } else { "FAIL" }
        );
    }
    if let Some(out) = &a.out {
        let file = GradcheckFile {
            checks: lines
                .iter()
                .map(|l| GradcheckRow {
                    name: l.name.clone(),
                    max_rel_err: l.max_rel_err,
                    tolerance: l.tolerance,
                    checked: l.checked as i64,
                    passed: l.passed(),
                })
                .collect(),
        };
        write_out(out, &toml::to_string(&file)?)?;
    }
    let failed: Vec<&str> = lines.iter().filter(|l| !l.passed()).map(|l| l.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(NumericFailure(format!("gradient check failed for {}", failed.join(", "))).into())
    }
}

pub fn inspect(a: InspectArgs) -> Result<()> {
    Resolved::new("inspect")
        .path("model", a.model.as_deref())
        .path("data", a.data.as_deref())
        .print();
    if let Some(path) = &a.model {
        let ck = Checkpoint::read(path)?;
        let width = ck.names().map(str::len).max().unwrap_or(4);
        let (mut params, mut buffers) = (0, 0);
        for (name, t) in ck.iter() {
            let dtype = match t {
                StoredTensor::F32(_) => "f32",
                StoredTensor::F64(_) => "f64",
            };
            println!("{name:<width$}  {dtype}  {:?}", t.shape());
            if name == BN_RUNNING_MEAN || name == BN_RUNNING_VAR {
                buffers += t.numel();
            } else if !name.starts_with(META_PREFIX) {
                params += t.numel();
            }
        }
        println!("{} tensors, {params} parameters, {buffers} running-statistic values", ck.len());
        let sidecar = eegvit::training::config_sidecar(path);
        if sidecar.exists() {
            let config = ModelConfig::from_toml(&fs::read_to_string(&sidecar)?)?;
            let flops = estimate_flops(&config, 1)?;
            println!(
                "config {}: {} tokens, {:.3} GFLOPs per sample",
                sidecar.display(),
                flops.tokens,
                flops.total as f64 / 1e9
            );
        }
    }
    if let Some(path) = &a.data {
        let ds = load_data(path)?;
        let mean = ds.label_mean();
        println!(
            "{} trials, {} subjects, {} channels x {} samples",
            ds.len(),
            ds.subjects().len(),
            ds.channels(),
            ds.timepoints()
        );
        println!(
            "label mean ({:.1}, {:.1}) mm, mean-predictor RMSE {:.2} mm, digest {}",
            mean[0],
            mean[1],
            naive_rmse(&ds, mean),
            ds.digest()
        );
    }
    Ok(())
}

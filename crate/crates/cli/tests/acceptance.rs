//! Acceptance criteria 1 to 8, run in order in one process so timing
//! measurements never overlap. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use eegvit::ablation::{apply_variant, Variant};
use eegvit::bench::{best_speedup, patch_sweep, SweepOptions, DEFAULT_SWEEP};
use eegvit::checkpoint::Checkpoint;
use eegvit::data::{generate_synthetic, read_dataset, split_by_subject, write_dataset, SyntheticSpec};
use eegvit::flops::estimate_flops;
use eegvit::gradcheck::{model_check, op_suite};
use eegvit::model::Model;
use eegvit::reference::{BASELINES, PATCH_SPEEDUP};
use eegvit::tensor::{parallel, RngStream, Tensor};
use eegvit::training::{adam_step, train, train_seed, AdamConfig, AdamState, Decision, EarlyStopper, TrainConfig};
use eegvit::ModelConfig;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_1() -> Outcome {
    let expected = [
        ("Naive Guessing", 123.3, 0.0),
        ("KNN", 119.7, 0.0),
        ("RBF SVR", 123.0, 0.0),
        ("Linear Regression", 118.3, 0.0),
        ("Random Forest", 116.7, 0.1),
        ("CNN", 70.4, 1.1),
        ("EEGViT (Pre-trained)", 55.4, 0.2),
        ("EEGViT-TCNet", 51.8, 0.6),
    ];
    let readme = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap_or_default();
    let mut missing = Vec::new();
    for (name, m, s) in BASELINES {
        if !readme.contains(&format!("| {name} | {m:.1} ± {s:.1} |")) {
            missing.push(name);
        }
    }
    for v in Variant::ALL {
        let (m, s) = v.reference_rmse();
        if !readme.contains(&format!("| {} | {m:.1} ± {s:.1} |", v.row_label())) {
            missing.push(v.row_label());
        }
    }
    check(
        BASELINES == expected && Variant::Full.reference_rmse() == (51.8, 0.6) && missing.is_empty(),
        format!(
            "full-scale 51.8 ± 0.6 mm and {} other reference rows recorded, not reproduced at desk scale{}",
            BASELINES.len() + Variant::ALL.len() - 1,
            if missing.is_empty() { String::new() } else { format!("; README lacks {missing:?}") }
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let ops = op_suite().map_err(|e| e.to_string())?;
    let model = model_check(&ModelConfig::desk(), 4, 8, 1).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let worst_op = ops.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err)).unwrap();
    let failed: Vec<&str> = ops.iter().filter(|l| !l.passed()).map(|l| l.name.as_str()).collect();
    check(
        failed.is_empty() && model.passed() && secs < 120.0,
        format!(
            "{} ops, worst {} {:.1e} (< 1e-4){}; desk model {:.1e} over {} coords (< 1e-3); {secs:.1} s",
            ops.len(),
            worst_op.name,
            worst_op.max_rel_err,
            if failed.is_empty() { String::new() } else { format!(", failed {failed:?}") },
            model.max_rel_err,
            model.checked
        ),
    )
}

fn criterion_3() -> Outcome {
    let base = ModelConfig::default();
    let tokens = base.token_count();
    let mut r = RngStream::new(3);
    let x = Tensor::from_fn(vec![2, 129, 500], |_| r.normal() as f32);
    let mut shapes = Vec::new();
    for v in Variant::ALL {
        let config = apply_variant(&base, v).map_err(|e| e.to_string())?;
        let model = Model::<f32>::build(config, &RngStream::new(0)).map_err(|e| e.to_string())?;
        let y = model.predict(&x).map_err(|e| format!("{v}: {e}"))?;
        shapes.push((v, y.shape().to_vec(), y.all_finite()));
    }
    let bad: Vec<String> = shapes
        .iter()
        .filter(|(_, s, finite)| s != &[2, 2] || !finite)
        .map(|(v, s, _)| format!("{v} {s:?}"))
        .collect();
    check(
        tokens == Some(14) && bad.is_empty(),
        format!("[2,129,500] -> [2,2] for all 8 variants at full size, {tokens:?} tokens{}", if bad.is_empty() { String::new() } else { format!("; bad {bad:?}") }),
    )
}

fn criterion_4() -> Outcome {
    let cfg = TrainConfig {
        max_epochs: 30,
        seeds: vec![1, 2, 3],
        ..TrainConfig::default()
    };
    let clean = generate_synthetic(&SyntheticSpec::default()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let report = train(&ModelConfig::desk(), &clean, &cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let ratios: Vec<f64> = report.runs.iter().map(|r| r.best_val_rmse / r.naive_rmse).collect();
    let clean_ratio = median(ratios.clone());
    let levels = [0.25, 1.0, 4.0];
    let mut medians = Vec::new();
    for noise in levels {
        let ds = generate_synthetic(&SyntheticSpec {
            noise_std: noise,
            ..SyntheticSpec::default()
        })
        .map_err(|e| e.to_string())?;
        let r = train(&ModelConfig::desk(), &ds, &cfg).map_err(|e| e.to_string())?;
        medians.push(median(r.per_seed_rmse()));
    }
    let monotone = medians.windows(2).all(|w| w[1] > w[0]);
    check(
        clean_ratio < 0.5 && report.runs.len() == 3 && secs <= 300.0 && monotone,
        format!(
            "noise-free median RMSE/mean-predictor {clean_ratio:.3} (seeds {:?}, < 0.5) in {secs:.0} s; medians at noise {levels:?}: {:.1}, {:.1}, {:.1} mm",
            ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            medians[0],
            medians[1],
            medians[2]
        ),
    )
}

fn reference_stop(history: &[f64], patience: usize) -> usize {
    let mut best = f64::INFINITY;
    let mut wait = 0;
    for (i, &v) in history.iter().enumerate() {
        if v < best {
            (best, wait) = (v, 0);
        } else {
            wait += 1;
            if wait == patience {
                return i + 1;
            }
        }
    }
    history.len()
}

fn criterion_5() -> Outcome {
    let mut rng = RngStream::new(55);
    let mut agree = 0;
    for _ in 0..50 {
        let len = 15 + rng.below(70) as usize;
        let mut level = 100.0;
        let history: Vec<f64> = (0..len)
            .map(|_| {
                level += rng.uniform_range(-2.5, 2.0);
                (level + rng.uniform_range(-3.0, 3.0)).round()
            })
            .collect();
        let mut s = EarlyStopper::new(10);
        let stop = history
            .iter()
            .position(|v| s.observe(*v) == Decision::Stop)
            .map_or(history.len(), |i| i + 1);
        agree += usize::from(stop == reference_stop(&history, 10));
    }

    let mut p = vec![1.0f64];
    let mut st = AdamState::new([1]);
    adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut st, &AdamConfig::default());
    let adam_err = (p[0] - (1.0 - 1e-4 / (1.0 + 1e-8))).abs();

    let ds = generate_synthetic(&SyntheticSpec {
        trials_per_subject: 1,
        timepoints: 2,
        ..SyntheticSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let mut splits_ok = 0;
    for seed in 0..100 {
        let (tr, va) = split_by_subject(&ds, 0.7, seed).map_err(|e| e.to_string())?;
        let (a, b) = (tr.subjects(), va.subjects());
        splits_ok += usize::from(a.len() == 7 && b.len() == 3 && a.is_disjoint(&b));
    }
    check(
        agree == 50 && adam_err < 1e-9 && splits_ok == 100,
        format!("early stopping {agree}/50 exact; Adam step error {adam_err:.1e}; {splits_ok}/100 splits 7/3 and disjoint"),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let base = ModelConfig::bench();
    let rows = patch_sweep(&base, &DEFAULT_SWEEP, &SweepOptions::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let q14 = estimate_flops(&base.clone().with_patch(1, 1), 1).map_err(|e| e.to_string())?;
    let q7 = estimate_flops(&base.clone().with_patch(2, 2), 1).map_err(|e| e.to_string())?;
    let exact_four = (q14.tokens, q7.tokens) == (14, 7) && q14.attention.quadratic == 4 * q7.attention.quadratic;
    // rows are ordered by decreasing token count
    let monotone = rows.windows(2).all(|w| w[1].result.tokens < w[0].result.tokens && w[1].result.median < w[0].result.median);
    let (slow, fast, ratio) = best_speedup(&rows).ok_or("empty sweep")?;
    let medians: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{:.1}ms", r.result.tokens, r.result.median * 1e3))
        .collect();
    check(
        exact_four && monotone && ratio >= 2.0 && secs < 120.0,
        format!(
            "quadratic FLOPs 14 vs 7 tokens exactly 4x: {exact_four}; medians {}; best {:.2}x ({} vs {} tokens, per batch and per sample; reference {PATCH_SPEEDUP}x); {secs:.0} s",
            medians.join(" "),
            ratio,
            rows[fast].result.tokens,
            rows[slow].result.tokens
        ),
    )
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = generate_synthetic(&SyntheticSpec {
        n_subjects: 4,
        trials_per_subject: 8,
        noise_std: 0.5,
        ..SyntheticSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let path = dir.path().join("d.eegds");
    write_dataset(&ds, &path).map_err(|e| e.to_string())?;
    let bytes = fs::read(&path).map_err(|e| e.to_string())?;
    let back = read_dataset(&path).map_err(|e| e.to_string())?;
    let eegds_exact = back == ds && {
        write_dataset(&back, &path).map_err(|e| e.to_string())?;
        fs::read(&path).map_err(|e| e.to_string())? == bytes
    };

    let cfg = TrainConfig {
        max_epochs: 3,
        batch_size: 8,
        train_fraction: 0.5,
        seeds: vec![1, 2],
        ..TrainConfig::default()
    };
    let was = parallel::is_enabled();
    parallel::set_enabled(false);
    let a = train(&ModelConfig::desk(), &ds, &cfg).map_err(|e| e.to_string())?;
    let b = train(&ModelConfig::desk(), &ds, &cfg).map_err(|e| e.to_string())?;
    parallel::set_enabled(true);
    let c = train(&ModelConfig::desk(), &ds, &cfg).map_err(|e| e.to_string())?;
    parallel::set_enabled(was);
    let reports_identical = a.same_result(&b) && a.same_result(&c);

    let run = train_seed(&ModelConfig::desk(), &ds, &cfg, 1, &mut |_| {}).map_err(|e| e.to_string())?;
    let ntar = run.checkpoint().to_bytes();
    let ntar_exact = Checkpoint::from_bytes(&ntar).map(|c| c.to_bytes() == ntar).unwrap_or(false);

    let small = generate_synthetic(&SyntheticSpec {
        n_subjects: 1,
        trials_per_subject: 2,
        channels: 2,
        timepoints: 3,
        ..SyntheticSpec::default()
    })
    .map_err(|e| e.to_string())?;
    write_dataset(&small, &path).map_err(|e| e.to_string())?;
    let small_bytes = fs::read(&path).map_err(|e| e.to_string())?;
    let mut ck = Checkpoint::new();
    ck.insert("w", Tensor::from_vec(vec![3], vec![1.0f32, 2.0, 3.0]).unwrap());
    let ck_bytes = ck.to_bytes();
    let mut typed = 0;
    let mut total = 0;
    let bad_path = dir.path().join("bad.eegds");
    for (i, mask) in (0..small_bytes.len()).flat_map(|i| [(i, 0x01u8), (i, 0xff)]) {
        let mut bad = small_bytes.clone();
        bad[i] ^= mask;
        fs::write(&bad_path, &bad).map_err(|e| e.to_string())?;
        total += 1;
        let r = catch_unwind(AssertUnwindSafe(|| read_dataset(&bad_path)));
        typed += usize::from(matches!(r, Ok(Err(eegvit::Error::Data(_)))));
    }
    for len in 0..ck_bytes.len() {
        let mut bad = ck_bytes.clone();
        bad[len] ^= 0x20;
        total += 2;
        let r = catch_unwind(|| Checkpoint::from_bytes(&bad).is_err());
        typed += usize::from(matches!(r, Ok(true)));
        let r = catch_unwind(|| Checkpoint::from_bytes(&ck_bytes[..len]).is_err());
        typed += usize::from(matches!(r, Ok(true)));
    }
    check(
        eegds_exact && ntar_exact && reports_identical && typed == total,
        format!(
            "EEGDS bit-exact {eegds_exact}, NTAR bit-exact {ntar_exact}; RunReports identical across reruns and parallel on/off: {reports_identical}; {typed}/{total} corruptions gave typed errors"
        ),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> Result<(f64, String), String> {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_eegvit"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    if !o.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    Ok((secs, String::from_utf8_lossy(&o.stdout).into_owned()))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    run_cli(&["gen-data", "--seed", "0", "--out", "ds.eegd"], d)?;
    let args = ["ablate", "--data", "ds.eegd", "--seed", "1..5", "--epochs", "30", "--cache", "cache", "--out", "table.toml"];
    let (cold, out1) = run_cli(&args, d)?;
    let first = fs::read_to_string(d.join("table.toml")).map_err(|e| e.to_string())?;
    let (warm, out2) = run_cli(&args, d)?;
    let second = fs::read_to_string(d.join("table.toml")).map_err(|e| e.to_string())?;

    let table: toml::Table = toml::from_str(&first).map_err(|e| e.to_string())?;
    let rows = table["rows"].as_array().ok_or("no rows")?;
    let complete = rows.len() == 8
        && rows.iter().all(|r| {
            r.get("per_seed_rmse").and_then(|v| v.as_array()).is_some_and(|v| v.len() == 5)
                && r.get("failed_seeds").and_then(|v| v.as_array()).is_some_and(|v| v.is_empty())
                && r.get("std").and_then(|v| v.as_float()).is_some_and(|s| s >= 0.0 && s.is_finite())
                && r.get("mean").and_then(|v| v.as_float()).is_some_and(f64::is_finite)
        });
    let cells = fs::read_dir(d.join("cache")).map_err(|e| e.to_string())?.count();
    let text_table = |s: &str| s.lines().skip_while(|l| !l.starts_with("Model Variation")).collect::<Vec<_>>().join("\n");
    let same = first == second && text_table(&out1) == text_table(&out2);
    let summary: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{} {:.1}±{:.1}",
                r["variant"].as_str().unwrap_or("?"),
                r.get("mean").and_then(|v| v.as_float()).unwrap_or(f64::NAN),
                r.get("std").and_then(|v| v.as_float()).unwrap_or(f64::NAN)
            )
        })
        .collect();
    check(
        complete && cells == 80 && cold < 1800.0 && warm < 5.0 && same,
        format!(
            "8 variants x 5 seeds in {cold:.0} s (< 1800), complete table {complete}, {cells} cache files; cached rerun {warm:.2} s (< 5), identical {same}; {}",
            summary.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("reference results recorded", criterion_1),
        ("gradient suite", criterion_2),
        ("shapes and variants", criterion_3),
        ("learnability", criterion_4),
        ("protocol fidelity", criterion_5),
        ("speedup mechanism", criterion_6),
        ("determinism and formats", criterion_7),
        ("ablation grid", criterion_8),
    ];
    // ACCEPTANCE_ONLY=2,6 runs a subset
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eegvit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eegvit"))
        .args(args)
        .current_dir(dir)
        .env_remove("EEGVIT_DETERMINISTIC")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SUBCOMMANDS: [&str; 7] = ["gen-data", "train", "eval", "bench", "ablate", "gradcheck", "inspect"];

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1");
    let dir = tempfile::tempdir().unwrap();
    let mut cases: Vec<(String, Vec<&str>)> = vec![("eegvit".into(), vec!["--help"])];
    cases.extend(SUBCOMMANDS.iter().map(|s| (s.to_string(), vec![*s, "--help"])));
    for (name, args) in cases {
        let o = eegvit(&args, dir.path());
        assert_eq!(o.status.code(), Some(0), "{name}");
        let text = stdout(&o);
        let path = golden.join(format!("{name}.txt"));
        if update {
            fs::write(&path, &text).unwrap();
            continue;
        }
        let want = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        assert_eq!(text, want, "{name} --help changed; rerun with UPDATE_GOLDEN=1 to accept");
    }
}

#[test]
fn every_flag_is_documented() {
    let dir = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let text = stdout(&eegvit(&[sub, "--help"], dir.path()));
        for line in text.lines().filter(|l| l.trim_start().starts_with("--")) {
            let rest = line.trim_start().split_once("  ").map(|(_, d)| d.trim());
            assert!(rest.is_some_and(|d| !d.is_empty()), "{sub}: undocumented flag line '{line}'");
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["train", "--data", "x", "--out", "y", "--frobnicate"],
        vec!["train", "--out", "y"],
        vec!["launch"],
        vec![],
        vec!["inspect"],
        vec!["bench", "--reps", "many"],
    ] {
        let o = eegvit(&args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("Usage") || err.contains("--help"), "{args:?}");
    }
}

#[test]
fn data_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = eegvit(&["train", "--data", "absent.eegd", "--out", "r.toml"], d);
    assert_eq!(o.status.code(), Some(2));

    fs::write(d.join("junk.eegd"), b"EEGD\x01\0\0\0garbage").unwrap();
    let o = eegvit(&["inspect", "--data", "junk.eegd"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("data error"));

    fs::write(d.join("bad.toml"), "[model]\nwidth = 3\n").unwrap();
    let o = eegvit(&["gen-data", "--config", "bad.toml", "--out", "x.eegd"], d);
    assert_eq!(o.status.code(), Some(0), "gen-data ignores [model]");
    let o = eegvit(&["bench", "--config", "bad.toml"], d);
    assert_eq!(o.status.code(), Some(2));

    let o = eegvit(&["bench", "--sweep", "15:1", "--preset", "bench"], d);
    assert_eq!(o.status.code(), Some(2));
    let o = eegvit(&["gradcheck", "--scale", "galactic"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_from_data_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = ["gen-data", "--subjects", "4", "--trials", "10", "--seed", "7", "--out", "ds.eegd"];
    let o = eegvit(&gen, d);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("# resolved configuration\ncommand = \"gen-data\""));
    let first = fs::read(d.join("ds.eegd")).unwrap();
    eegvit(&gen, d);
    assert_eq!(fs::read(d.join("ds.eegd")).unwrap(), first, "gen-data is idempotent");

    fs::write(d.join("run.toml"), "preset = \"desk\"\n[train]\nbatch_size = 8\nmax_epochs = 5\n").unwrap();
    let train = [
        "train", "--config", "run.toml", "--data", "ds.eegd", "--seed", "1..5", "--epochs", "2", "--quiet", "--save-dir",
        "models", "--out", "report.txt",
    ];
    let o = eegvit(&train, d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = stdout(&o);
    assert!(echo.contains("max_epochs = 2"), "flags override the file");
    assert!(echo.contains("batch_size = 8"), "file overrides defaults");
    let report = eegvit::RunReport::from_toml(&fs::read_to_string(d.join("report.txt")).unwrap()).unwrap();
    assert_eq!(report.per_seed_rmse().len(), 5);
    assert!(report.mean.is_finite() && report.std >= 0.0);

    let o = eegvit(&train, d);
    let again = eegvit::RunReport::from_toml(&fs::read_to_string(d.join("report.txt")).unwrap()).unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(again.same_result(&report), "train is idempotent");

    let o = eegvit(&["eval", "--model", "models/seed-3.ntar", "--data", "ds.eegd", "--split-seed", "3", "--out", "e.toml"], d);
    assert_eq!(o.status.code(), Some(0));
    let e: toml::Table = toml::from_str(&fs::read_to_string(d.join("e.toml")).unwrap()).unwrap();
    let rmse = e["rmse"].as_float().unwrap();
    assert_eq!(rmse, report.runs[2].best_val_rmse);

    let o = eegvit(&["inspect", "--model", "models/seed-1.ntar"], d);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("vit.cls_token"), "{text}");
    assert!(text.contains("153178 parameters"), "{text}");
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    eegvit(&["gen-data", "--subjects", "3", "--trials", "4", "--out", "ds.eegd"], d);
    let o = eegvit(
        &["train", "--data", "ds.eegd", "--lr", "1e30", "--seed", "1", "--epochs", "2", "--batch-size", "4", "--quiet", "--out", "r"],
        d,
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bench_sweep_has_monotone_token_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = eegvit(&["bench", "--preset", "desk", "--sweep", "1:1,2:2,4:4,8:8", "--batch", "2", "--reps", "10", "--out", "s.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let rows = eegvit::bench::sweep_from_toml(&fs::read_to_string(dir.path().join("s.toml")).unwrap()).unwrap();
    let tokens: Vec<usize> = rows.iter().map(|r| r.result.tokens).collect();
    assert_eq!(tokens, [8, 4, 2, 1]);
    assert!(stdout(&o).contains("quadratic attention FLOPs ratio 4.000"));
}

#[test]
fn gradcheck_ops_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = eegvit(&["gradcheck", "--scale", "ops", "--out", "g.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("g.toml")).unwrap();
    assert_eq!(text.matches("passed = true").count(), 15);
}

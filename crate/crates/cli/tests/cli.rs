use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gpomdp_cli::read_csv;

const BIN: &str = env!("CARGO_BIN_EXE_gpomdp");

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn gpomdp(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copies the benchmark model next to a config built from `body`.
fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    fs::copy(repo("models/three_state.toml"), dir.join("model.toml")).unwrap();
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const POLICY: &str = r#"
[policy]
family = "softmax-linear"
features = [[12.0, 6.0], [6.0, 12.0], [5.0, 5.0]]
feature_scale = 18.0
"#;

fn small_grad_error() -> String {
    format!(
        r#"schema_version = 1
experiment = "grad-error"
model = "model.toml"
master_seed = 5
seeds = 3
{POLICY}
[theta]
rule = "fixed"
values = [1.0, 1.0, -1.0, -1.0]

[estimator]
betas = [0.4, 0.95]
horizons = [1, 10, 1000]
"#
    )
}

#[test]
fn validate_accepts_benchmark_and_names_bad_row() {
    let ok = gpomdp(&[
        "validate",
        repo("models/three_state.toml").to_str().unwrap(),
    ]);
    assert!(ok.status.success(), "{}", stderr(&ok));

    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(repo("models/three_state.toml"))
        .unwrap()
        .replacen("[0.0, 0.8, 0.2]", "[0.0, 0.8, 0.1]", 1);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, text).unwrap();
    let out = gpomdp(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("transitions[0] row 0"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn grad_error_csv_schema_and_boundary_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ge.toml", &small_grad_error());
    let out_dir = dir.path().join("out");
    let out = gpomdp(&[
        "grad-error",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = out_dir.join("grad-error.csv");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("experiment,seed,beta,t_or_steps,value,wall_ms\n"));
    let rows = read_csv(&csv).unwrap();
    // 2 labels x 2 betas x 3 horizons x 3 seeds
    assert_eq!(rows.len(), 36);
    assert!(
        rows.iter()
            .any(|r| r.t_or_steps == 1 && r.value.is_finite())
    );
    assert!(rows.iter().all(|r| r.value.is_finite() && r.wall_ms == 0.0));
    assert!(out_dir.join("grad-error_summary.txt").is_file());
}

#[test]
fn wall_time_flag_fills_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ge.toml", &small_grad_error());
    let out_dir = dir.path().join("out");
    let out = gpomdp(&[
        "grad-error",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--wall-time",
    ]);
    assert!(out.status.success());
    let rows = read_csv(&out_dir.join("grad-error.csv")).unwrap();
    assert!(rows.iter().any(|r| r.wall_ms > 0.0));
}

#[test]
fn same_seed_gives_identical_files_and_other_seed_differs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = gpomdp(&[
            "train",
            "--runs",
            "8",
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read(out_dir.join("train.csv")).unwrap()
    };
    let a = run("a", "42");
    let b = run("b", "42");
    let c = run("c", "43");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn learning_curve_rises_and_rewards_stay_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = gpomdp(&["train", "--runs", "50", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_csv(&out_dir.join("train.csv")).unwrap();
    for r in &rows {
        assert!(
            (0.0..=0.8 + 1e-9).contains(&r.value),
            "{} {} {}",
            r.experiment,
            r.t_or_steps,
            r.value
        );
    }
    let curve: Vec<f64> = rows
        .iter()
        .filter(|r| r.experiment == "train-curve-mean")
        .map(|r| r.value)
        .collect();
    assert_eq!(curve.len(), 21);
    let smoothed: Vec<f64> = curve
        .windows(5)
        .map(|w| w.iter().sum::<f64>() / 5.0)
        .collect();
    for w in smoothed.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "{smoothed:?}");
    }
    assert!(curve[curve.len() - 1] > curve[0]);
    let summary = fs::read_to_string(out_dir.join("train_summary.txt")).unwrap();
    assert!(summary.contains("failures = 0"));
    assert!(summary.contains("q90_final_eta"));
}

#[test]
fn bias_sweep_exact_rows() {
    let dir = tempfile::tempdir().unwrap();
    let body = small_grad_error()
        .replace("grad-error", "bias-sweep")
        .replace("betas = [0.4, 0.95]", "betas = [0.0, 0.5, 0.99]")
        .replace("horizons = [1, 10, 1000]", "horizons = [2000]");
    let cfg = write_config(dir.path(), "bs.toml", &body);
    let out_dir = dir.path().join("out");
    let out = gpomdp(&[
        "bias-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_csv(&out_dir.join("bias-sweep.csv")).unwrap();
    let exact = |beta: f64| {
        rows.iter()
            .find(|r| r.experiment == "bias-sweep-exact" && r.beta == beta)
            .unwrap()
            .value
    };
    // β = 0: ‖∇η − π'∇P r‖/‖∇η‖, frozen from an independent computation
    assert!((exact(0.0) - 0.0770765).abs() < 1e-6);
    assert!(exact(0.99) < exact(0.5));
    assert_eq!(
        rows.iter().filter(|r| r.experiment == "bias-sweep").count(),
        9
    );
    assert_eq!(
        rows.iter()
            .filter(|r| r.experiment == "bias-sweep-mean-se")
            .count(),
        3
    );
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = gpomdp(&["train", "--config", "/nonexistent/config.toml"]);
    assert_eq!(missing.status.code(), Some(1));

    let cfg = write_config(dir.path(), "ge.toml", &small_grad_error());
    let wrong_kind = gpomdp(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(wrong_kind.status.code(), Some(1));
    assert!(stderr(&wrong_kind).contains("grad-error"));

    let unknown = write_config(
        dir.path(),
        "unknown.toml",
        &small_grad_error().replace("seeds = 3", "seeds = 3\nbogus = 1"),
    );
    let out = gpomdp(&["grad-error", "--config", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bogus"));

    let usage = gpomdp(&["train", "--runs", "many"]);
    assert_eq!(usage.status.code(), Some(1));
}

#[test]
fn too_many_failed_runs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let body = fs::read_to_string(repo("configs/train.toml"))
        .unwrap()
        .replace("../models/three_state.toml", "model.toml")
        .replace("s0 = 100.0", "s0 = 1e-9")
        .replace("max_bracket_steps = 60", "max_bracket_steps = 2");
    let cfg = write_config(dir.path(), "train.toml", &body);
    let out_dir = dir.path().join("out");
    let out = gpomdp(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--runs",
        "10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let rows = read_csv(&out_dir.join("train.csv")).unwrap();
    assert_eq!(
        rows.iter()
            .filter(|r| r.experiment == "train-failed")
            .count(),
        10
    );
}

#[test]
fn analyze_prints_exact_quantities() {
    let out = gpomdp(&["analyze", "--beta", "0.9"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("eta = 0.2941974728"));
    assert!(text.contains("relative_bias = 8.282178e-3"));

    let opt = gpomdp(&["analyze", "--theta=-10,10,10,-10", "--beta", "0.5"]);
    assert!(opt.status.success(), "{}", stderr(&opt));
}

#[test]
fn shipped_configs_load() {
    for name in ["grad_error", "bias_sweep", "train"] {
        let path = repo(&format!("configs/{name}.toml"));
        gpomdp_cli::ExperimentConfig::from_path(&path).unwrap();
    }
}

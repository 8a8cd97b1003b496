use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpm"))
        .args(args)
        .env("FPM_THREADS", "1")
        .output()
        .expect("fpm runs")
}

fn config_arg(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

/// Small but complete setup: 5x5 LEDs, 32 px captures, 4x upsampling.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.json");
    let text = format!(
        r#"{{
  "leds_per_side": 5,
  "shift_mm": [1.5, -1.0],
  "segment": {{"lr_size": 32, "hr_size": 128}},
  "recon": {{"max_iters": 4}},
  "annealer": {{"max_iters": 12}},
  "seed": 3{extra}
}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

fn simulate(dir: &Path, extra: &str) -> PathBuf {
    let cfg = small_config(dir, extra);
    let out = fpm(&["simulate", "--config", &config_arg(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    cfg
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_manifest_with_true_shift() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "");
    let manifest = json(&dir.path().join("stack/manifest.json"));
    let shift = manifest["true_shift"].as_array().unwrap();
    assert!((shift[0].as_f64().unwrap() - 1.5e-3).abs() < 1e-15);
    assert!((shift[1].as_f64().unwrap() + 1.0e-3).abs() < 1e-15);
    assert_eq!(manifest["images"].as_array().unwrap().len(), 25);
    assert!(dir.path().join("stack/led_m-2_n2.png").exists());
    assert!(dir.path().join("stack/truth.npy").exists());
}

#[test]
fn zero_shift_is_recorded_as_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"leds_per_side": 3, "segment": {"lr_size": 32, "hr_size": 128}}"#,
    )
    .unwrap();
    let out = fpm(&["simulate", "--config", &config_arg(&cfg)]);
    assert!(out.status.success());
    let manifest = json(&dir.path().join("stack/manifest.json"));
    assert_eq!(manifest["true_shift"], serde_json::json!([0.0, 0.0]));
}

#[test]
fn default_geometry_gives_full_array() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, "{}").unwrap();
    let out = fpm(&["simulate", "--config", &config_arg(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pngs = fs::read_dir(dir.path().join("stack"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 289);
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let noisy = r#", "noise": {"gaussian_rel": 0.01}"#;
    simulate(a.path(), noisy);
    simulate(b.path(), noisy);
    let mut names: Vec<_> = fs::read_dir(a.path().join("stack"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 27);
    for name in names {
        let x = fs::read(a.path().join("stack").join(&name)).unwrap();
        let y = fs::read(b.path().join("stack").join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn seed_flag_changes_the_object() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate(dir.path(), "");
    let first = fs::read(dir.path().join("stack/truth.npy")).unwrap();
    let out = fpm(&["simulate", "--config", &config_arg(&cfg), "--seed", "4"]);
    assert!(out.status.success());
    assert_ne!(first, fs::read(dir.path().join("stack/truth.npy")).unwrap());
}

#[test]
fn reconstruct_writes_artifacts_and_evaluate_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate(dir.path(), "");
    let out = fpm(&["reconstruct", "--config", &config_arg(&cfg), "--correct", "mcfpm"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in [
        "amplitude.png",
        "phase.png",
        "object.npy",
        "pupil.npy",
        "cost.csv",
        "correction.json",
        "trace.csv",
        "report.json",
    ] {
        assert!(o.join(f).exists(), "missing {f}");
    }
    let correction = json(&o.join("correction.json"));
    assert_eq!(correction["method"], "mcfpm");
    let evals = correction["n_cost_evals"].as_u64().unwrap();
    assert!((1..=12).contains(&evals));
    // every evaluation reconstructs the 5x5 bright field for 5 sweeps
    assert_eq!(correction["n_forward_syntheses"].as_u64().unwrap(), evals * 25 * 5);
    let trace = fs::read_to_string(o.join("trace.csv")).unwrap();
    assert!(trace.starts_with("eval,candidate_dx,candidate_dy,cost,accepted\n"));
    assert_eq!(trace.lines().count() as u64, evals + 1);
    let cost = fs::read_to_string(o.join("cost.csv")).unwrap();
    assert_eq!(cost.lines().count(), 5);
    let report = json(&o.join("report.json"));
    assert_eq!(report["disorder_metric"].as_f64().unwrap(), 0.0);

    let out = fpm(&["evaluate", "--config", &config_arg(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval = json(&o.join("evaluation.json"));
    assert_eq!(eval["rmse_amplitude"], report["rmse_amplitude"]);
}

#[test]
fn reconstruct_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate(dir.path(), "");
    let run = || {
        let out = fpm(&["reconstruct", "--config", &config_arg(&cfg), "--correct", "mcfpm"]);
        assert!(out.status.success());
        (
            fs::read(dir.path().join("out/object.npy")).unwrap(),
            fs::read(dir.path().join("out/amplitude.png")).unwrap(),
            fs::read(dir.path().join("out/trace.csv")).unwrap(),
        )
    };
    assert!(run() == run());
}

#[test]
fn bench_reports_all_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate(dir.path(), "");
    let out = fpm(&["bench", "--config", &config_arg(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = json(&dir.path().join("out/bench.json"));
    let rows = rows.as_array().unwrap();
    let methods: Vec<_> = rows.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["none", "sa", "mcfpm", "mcfpm+local"]);
    let csv = fs::read_to_string(dir.path().join("out/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let mc = &rows[2];
    assert_eq!(mc["disorder_metric_mm"].as_f64().unwrap(), 0.0);
    assert!(mc["n_forward_syntheses"].as_u64() < rows[1]["n_forward_syntheses"].as_u64());
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"d": 4}"#).unwrap();
    let out = fpm(&["simulate", "--config", &config_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
    let out = fpm(&["simulate", "--config", &config_arg(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_mode_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = fpm(&["reconstruct", "--config", &config_arg(&cfg), "--correct", "genetic"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_stack_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = fpm(&["reconstruct", "--config", &config_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));
}

#[test]
fn unreadable_object_image_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("amp.png"), b"not a png").unwrap();
    let cfg = small_config(dir.path(), r#", "object": {"amplitude_path": "amp.png"}"#);
    let out = fpm(&["simulate", "--config", &config_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("amp.png"));
}

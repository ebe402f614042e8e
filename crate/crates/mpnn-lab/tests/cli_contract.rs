//! Black-box contract checks for the command-line binary: exit codes,
//! artifact sets, seed handling, and config diagnostics.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mpnn-lab")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn binary")
}

fn write_cfg(dir: &Path, name: &str, v: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    p
}

fn stability_cfg() -> serde_json::Value {
    serde_json::json!({
        "kernel": {"kind": "ball_indicator", "r": 0.5},
        "signal": {"kind": "product"},
        "widths": [1, 8, 8],
        "init_scale": 1.0,
        "net_seed": 7,
        "n": 64,
        "n_prime": 128,
        "trials": 2,
        "bound_p": null,
        "dudley_c": 1.0,
        "master_seed": 42
    })
}

#[test]
fn unknown_command_exits_2_with_usage() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty(), "usage text expected on stderr");
}

#[test]
fn unreadable_config_exits_2() {
    let out = run(&["stability", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    std::fs::write(&p, b"{ not json").unwrap();
    let out = run(&["stability", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_field_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = stability_cfg();
    cfg.as_object_mut().unwrap().remove("trials");
    let p = write_cfg(dir.path(), "s.json", cfg);
    let out = run(&["stability", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("trials"), "diagnostic should name the field, got: {err}");
}

#[test]
fn unknown_key_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = stability_cfg();
    cfg.as_object_mut().unwrap().insert("typo_key".into(), serde_json::json!(1));
    let p = write_cfg(dir.path(), "s.json", cfg);
    let out_dir = dir.path().join("out");
    let out = run(&["stability", "--config", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("typo_key"), "warning should name the key, got: {err}");
    assert!(out_dir.join("stability.csv").exists());
}

#[test]
fn bound_below_size_floor_exits_3_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = stability_cfg();
    cfg["bound_p"] = serde_json::json!(0.05);
    cfg["kernel"] = serde_json::json!({"kind": "smoothed_ball", "r": 0.3, "ramp": 0.05});
    let p = write_cfg(dir.path(), "s.json", cfg);
    let out_dir = dir.path().join("out");
    let out = run(&["stability", "--config", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(
        !out_dir.join("stability.csv").exists(),
        "failed run must not leave artifacts behind"
    );
}

#[test]
fn convergence_emits_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "kernel_family": {"kind": "ball_indicator"},
        "radii": [0.5],
        "signals": [{"kind": "product"}],
        "reference_n": 128,
        "sizes": [32, 64],
        "trials": 2,
        "widths": [1, 8, 8],
        "init_scale": 1.0,
        "net_seed": 7,
        "master_seed": 42,
        "fit_min_size": 32
    });
    let p = write_cfg(dir.path(), "c.json", cfg);
    let out_dir = dir.path().join("out");
    let out = run(&["convergence", "--config", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in ["convergence.csv", "slopes.csv", "slopes_pooled.csv", "plot.svg", "plot_pooled.svg", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "missing artifact {f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).expect("json summary");
    assert!(summary["summary"]["curves"].is_array());
}

#[test]
fn seed_flag_overrides_and_repeats_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_cfg(dir.path(), "s.json", stability_cfg());
    let run_with = |out: &Path, seed: &str| {
        let o = run(&["stability", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out.join("stability.csv")).unwrap()
    };
    let a = run_with(&dir.path().join("a"), "11");
    let b = run_with(&dir.path().join("b"), "11");
    let c = run_with(&dir.path().join("c"), "12");
    assert_eq!(a, b, "same seed must reproduce bytes");
    assert_ne!(a, c, "different seed must change the draw");

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], serde_json::json!(11), "manifest records the override");
}

#[test]
fn shipped_configs_run_clean_schema_checks() {
    // keep the example configs in the repository root honest
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let pairs = [
        ("sample_graph.json", "sample-graph"),
        ("convergence_desk.json", "convergence"),
        ("convergence_full.json", "convergence"),
        ("stability_desk.json", "stability"),
        ("stability_bounded.json", "stability"),
        ("bounds.json", "bounds"),
        ("generalization_desk.json", "generalization"),
        ("generalization_full.json", "generalization"),
    ];
    for (file, cmd) in pairs {
        let path = root.join(file);
        assert!(path.exists(), "missing shipped config {file}");
        let report = mpnn_lab::cli::validate_config(&path, cmd).expect("validate");
        assert!(report.is_clean(), "{file}: {report:?}");
    }
}

#[test]
fn bounds_command_reports_and_respects_size_floor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "kernel": {"kind": "constant", "c": 1.0},
        "signal": {"kind": "product"},
        "widths": [1, 8, 8],
        "init_scale": 1.0,
        "net_seed": 7,
        "p": 0.05,
        "dudley_c": 1.0,
        "n": 4096
    });
    let p = write_cfg(dir.path(), "b.json", cfg);
    let out_dir = dir.path().join("out");
    let out = run(&["bounds", "--config", p.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("bounds.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["min_n"], serde_json::json!(30));
    assert!(report["evaluated"]["pooled_bound"].is_number());

    // constant kernels have a size floor of 30; n below it must refuse
    let mut low = serde_json::from_slice::<serde_json::Value>(&std::fs::read(&p).unwrap()).unwrap();
    low["n"] = serde_json::json!(16);
    let p2 = write_cfg(dir.path(), "b2.json", low);
    let out2 = run(&["bounds", "--config", p2.to_str().unwrap(), "--out", dir.path().join("out2").to_str().unwrap()]);
    assert_eq!(out2.status.code(), Some(3));
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn heatlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heatlab"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run(config: &Path, out: &Path, extra: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    heatlab(&args, envs)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Every emitted file except the manifest, by name.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_pipeline_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"pipeline": "teleport", "graph": "lattice", "dim": 1, "half_width": 4}"#);
    for args in [vec!["validate", "--config"], vec!["run", "--config"]] {
        let mut args = args;
        args.push(cfg.to_str().unwrap());
        let out = heatlab(&args, &[]);
        assert_eq!(out.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
    }
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"pipeline": "volume-fit", "graph": "lattice", "dim": 1, "half_width": 70, "radius_typo": 3}"#,
    );
    assert_eq!(heatlab(&["validate", "--config", cfg.to_str().unwrap()], &[]).status.code(), Some(1));
    let missing = dir.path().join("absent.json");
    assert_eq!(heatlab(&["validate", "--config", missing.to_str().unwrap()], &[]).status.code(), Some(1));
    assert_eq!(
        heatlab(&["validate", "--config", cfg.to_str().unwrap()], &[("HEATLAB_THREADS", "many")]).status.code(),
        Some(1)
    );
}

#[test]
fn every_shipped_config_validates() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = heatlab(&["validate", "--config", path.to_str().unwrap()], &[]);
        assert_ok(&out);
    }
}

#[test]
fn stage_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    // the fit range reaches past the stored truncation
    let cfg = write_config(
        dir.path(),
        r#"{"pipeline": "volume-fit", "graph": "lattice", "dim": 1, "half_width": 30, "r_min": 8, "r_max": 64}"#,
    );
    let out = run(&cfg, &dir.path().join("out"), &[], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage fit failed"));
}

#[test]
fn edge_list_graphs_resolve_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cycle: String = (0..12).map(|i| format!("c{i} c{} 1\n", (i + 1) % 12)).collect();
    std::fs::write(dir.path().join("cycle.txt"), cycle).unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"pipeline": "blowup", "graph": "edge-list", "edge_list": "cycle.txt", "mu_mode": "counting",
            "center": "c0", "alpha": 1, "initial": {"kind": "constant", "a0": 0.5}, "horizon": 10}"#,
    );
    let out_dir = dir.path().join("out");
    assert_ok(&run(&cfg, &out_dir, &[], &[]));
    let report = read_json(&out_dir.join("blowup.json"));
    // no boundary: u solves u' = u^2 from 0.5, blowing up at t = 2
    assert_eq!(report["trajectory"]["status"], "blow_up");
    let t_high = report["bracket"]["t_high"].as_f64().unwrap();
    let t_low = report["bracket"]["t_low"].as_f64().unwrap();
    assert!(t_low <= 2.0 && 2.0 <= t_high && t_high - t_low <= 2e-2, "{t_low} {t_high}");
    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["caveats"].as_array().unwrap().len(), 0);
}

#[test]
fn kernel_validate_passes_on_z() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&configs().join("kernel_validate.json"), dir.path(), &[], &[]);
    assert_ok(&out);
    let report = read_json(&dir.path().join("kernel_validate.json"));
    assert_eq!(report["all_pass"], true);
    let invariants = report["invariants"].as_array().unwrap();
    assert!(invariants.len() >= 9);
    assert!(invariants.iter().all(|i| i["pass"] == true));
    let csv = std::fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    // the largest ball clear of the truncation edge has radius 99
    assert_eq!(report["radius"], 99);
    assert_eq!(csv.lines().count(), 1 + 199 * 199);
}

#[test]
fn fujita_dichotomy_regression() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run(&configs().join("dichotomy.json"), dir.path(), &[], &[]));
    let entries = read_json(&dir.path().join("dichotomy.json"));
    let statuses: Vec<&str> = entries.as_array().unwrap().iter().map(|e| e["status"].as_str().unwrap()).collect();
    assert_eq!(statuses, ["blow_up", "blow_up", "horizon_reached"]);
    // constant data 0.5 never feels the far boundary before the ODE time
    // 1/(alpha a^alpha) = 2
    for e in &entries.as_array().unwrap()[..2] {
        let (lo, hi) = (e["t_low"].as_f64().unwrap(), e["t_high"].as_f64().unwrap());
        assert!((lo - 2.0).abs() < 1e-6 && (hi - 2.0).abs() < 1e-6, "{lo} {hi}");
    }
}

#[test]
fn manifest_inventory_matches_emitted_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run(&configs().join("squeeze.json"), dir.path(), &[], &[]));
    let manifest = read_json(&dir.path().join("manifest.json"));
    let files = artifacts(dir.path());
    let listed: BTreeMap<String, (String, u64)> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["path"].as_str().unwrap().to_string(),
                (f["sha256"].as_str().unwrap().to_string(), f["bytes"].as_u64().unwrap()),
            )
        })
        .collect();
    assert_eq!(listed.keys().collect::<Vec<_>>(), files.keys().collect::<Vec<_>>());
    for (name, bytes) in &files {
        let digest: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(listed[name], (digest, bytes.len() as u64), "{name}");
    }
    assert_eq!(manifest["pipeline"], "squeeze");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["alpha"], 2.0);
    let stages: Vec<&str> = manifest["stages"].as_array().unwrap().iter().map(|s| s["stage"].as_str().unwrap()).collect();
    assert!(stages.contains(&"fit") && stages.contains(&"squeeze"));
    let caveats = manifest["caveats"].as_array().unwrap();
    assert!(caveats.len() == 2, "truncation and fitted-constants caveats: {caveats:?}");
}

#[test]
fn identical_config_and_seed_give_identical_outputs() {
    for config in ["curvature.json", "blowup.json", "squeeze.json"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert_ok(&run(&configs().join(config), a.path(), &["--seed", "11"], &[]));
        // one worker: results must not depend on scheduling
        assert_ok(&run(&configs().join(config), b.path(), &["--seed", "11"], &[("HEATLAB_THREADS", "1")]));
        assert_eq!(artifacts(a.path()), artifacts(b.path()), "{config}");
        let strip = |dir: &Path| {
            let mut m = read_json(&dir.join("manifest.json"));
            m.as_object_mut().unwrap().remove("stages");
            m["config"].as_object_mut().unwrap().remove("output_dir");
            m
        };
        assert_eq!(strip(a.path()), strip(b.path()));
        assert_eq!(read_json(&a.path().join("manifest.json"))["seed"], 11);
    }
}

#[test]
fn seed_reaches_the_curvature_search() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_ok(&run(&configs().join("curvature.json"), a.path(), &["--seed", "1"], &[]));
    assert_ok(&run(&configs().join("curvature.json"), b.path(), &["--seed", "2"], &[]));
    let (ra, rb) = (read_json(&a.path().join("curvature.json")), read_json(&b.path().join("curvature.json")));
    assert_eq!(ra["seed"], 1);
    assert_eq!(rb["seed"], 2);
    assert_ne!(ra["witness"], rb["witness"]);
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surfdiff"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_manifest(dir: &Path) {
    let m = json(&dir.join("manifest.json"));
    let artifacts = m["artifacts"].as_array().unwrap();
    assert!(!artifacts.is_empty());
    for a in artifacts {
        assert!(dir.join(a["file"].as_str().unwrap()).exists());
        assert_eq!(a["sha256"].as_str().unwrap().len(), 64);
    }
    assert!(m["config"].is_object());
}

#[test]
fn kernel_defaults_print_origin_value() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["kernel"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("g(0)")).unwrap();
    let value: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((value - 0.288516869308).abs() < 1e-8, "{line}");
    let dir = tmp.path().join("kernel");
    assert!(dir.join("kernel.csv").exists());
    assert_manifest(&dir);
}

#[test]
fn kernel_short_table_has_unit_mass() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["kernel", "--eta-max", "20", "--nodes", "4096"]);
    assert!(o.status.success());
    let summary = json(&tmp.path().join("kernel/summary.json"));
    let mass = summary["mass"].as_f64().unwrap();
    assert!((mass - 1.0).abs() <= 1e-8, "integral of g over |eta| <= 20 is {mass}");
}

#[test]
fn kernel_rejects_coarse_table() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["kernel", "--nodes", "100"]).status.code(), Some(2));
}

#[test]
fn solve_writes_artifacts_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["solve", "--a", "0.1", "--b", "0.1", "--times", "1"];
    assert!(run(a.path(), &args).status.success());
    assert!(run(b.path(), &args).status.success());
    let (da, db) = (a.path().join("solve"), b.path().join("solve"));
    for f in ["profile.csv", "U_t1.csv", "metadata.json", "manifest.json"] {
        assert_eq!(std::fs::read(da.join(f)).unwrap(), std::fs::read(db.join(f)).unwrap(), "{f} differs");
    }
    let meta = json(&da.join("metadata.json"));
    assert!(meta["phi0"].as_f64().unwrap() > 1e-3);
    for r in meta["self_similarity"].as_array().unwrap() {
        assert!(r["residual"].as_f64().unwrap() < 1e-4);
    }
    assert_manifest(&da);
}

#[test]
fn solve_linear_data_short_circuits() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["solve", "--a", "0.2", "--b", "-0.2"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("note: A = -B"));
    let text = std::fs::read_to_string(tmp.path().join("solve/profile.csv")).unwrap();
    for line in text.lines().skip(1) {
        let psi: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((psi - 0.2).abs() < 1e-10);
    }
}

#[test]
fn solve_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["solve", "--a", "5", "--b", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("small data"));
    let o = run(tmp.path(), &["solve", "--a", "3", "--b", "3", "--slope-cap", "10"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(tmp.path().join("solve/history.csv").exists());
}

#[test]
fn sweep_runs_each_value_in_its_own_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["solve", "--times", "1", "--nodes", "2048", "--half-width", "30", "--sweep", "a=0.02:0.04:0.1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let root = tmp.path().join("sweep");
    for v in ["a=0.02", "a=0.06", "a=0.1"] {
        assert_manifest(&root.join(v));
    }
    assert_manifest(&root);
}

#[test]
fn config_file_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# smaller corner\nb = 0.05\ntimes = 1\nnodes = 2048\nhalf_width = 30\n").unwrap();
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "solve", "--b", "0.2"]);
    assert!(o.status.success());
    let meta = json(&tmp.path().join("solve/metadata.json"));
    assert_eq!(meta["b"].as_f64(), Some(0.05));
    let m = json(&tmp.path().join("solve/manifest.json"));
    assert_eq!(m["config"]["solver"]["nodes"].as_u64(), Some(2048));
}

#[test]
fn diagnose_linear_profile_file() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("line.csv");
    let mut text = String::from("x,phi\n");
    for j in 0..1024 {
        let x = -10.0 + j as f64 * 20.0 / 1024.0;
        text += &format!("{x:?},{:?}\n", 0.3 * x);
    }
    std::fs::write(&csv, text).unwrap();
    let o = run(tmp.path(), &["diagnose", "--profile", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(!out.contains("FAIL"), "{out}");
    assert!(out.contains("D vanishes identically"));
    assert_manifest(&tmp.path().join("diagnose"));
}

#[test]
fn diagnose_computed_profile_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["diagnose", "--from-solve", "--a", "0.1", "--b", "0.1"]);
    assert!(o.status.success());
    let report = json(&tmp.path().join("diagnose/report.json"));
    let checks = report["checks"].as_array().unwrap();
    let pass = |name: &str| checks.iter().find(|c| c["name"] == name).unwrap()["pass"].as_bool().unwrap();
    assert!(pass("key_identity"));
    assert!(pass("q_convexity"));
    let flags: Vec<&str> = report["flags"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert!(flags.iter().any(|f| f.starts_with("phi(0)")));
    assert!(flags.iter().any(|f| f.starts_with("D0 running max grows")));
}

#[test]
fn diagnose_counterexample() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["diagnose", "--counterexample", "--a", "1", "--eps", "0.1"]);
    assert!(o.status.success());
    let r = json(&tmp.path().join("diagnose/report.json"));
    let expected = 0.2 * 2f64.sqrt() * (2f64.sqrt() - 1.0);
    assert!((r["slope_fit"].as_f64().unwrap() - expected).abs() < 1e-6);
    assert!(r["gap_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn diagnose_rejects_malformed_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    std::fs::write(&csv, "x,phi\n0.0,oops\n").unwrap();
    assert_eq!(run(tmp.path(), &["diagnose", "--profile", csv.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn oracle_compare_corner_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["oracle-compare", "--a", "0.1", "--b", "0.1"]);
    assert!(o.status.success());
    let s = json(&tmp.path().join("oracle/summary.json"));
    assert!(s["max_height_diff"].as_f64().unwrap() <= 5e-3);
    assert!(tmp.path().join("oracle/height/manifest.json").exists());
    assert_manifest(&tmp.path().join("oracle"));

    let line = tempfile::tempdir().unwrap();
    let o = run(line.path(), &["oracle-compare", "--a", "0.1", "--b", "-0.1"]);
    assert!(o.status.success());
    let s = json(&line.path().join("oracle/summary.json"));
    assert!(s["max_height_diff"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn oracle_compare_rejects_mismatched_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["oracle-compare", "--march-half-width", "50"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid mismatch"));
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn abc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Machine-readable failure record on the last stderr line.
fn failure(o: &Output) -> Value {
    let err = stderr(o);
    serde_json::from_str(err.lines().last().expect("failure line")).unwrap()
}

fn triangle_config(dir: &Path) -> std::path::PathBuf {
    let o = abc(&["examples", "triangle", "--out", "ex"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("ex/triangle.config.json")
}

#[test]
fn counterexample_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = abc(&["examples", "counterexample", "--out", "ex", "--seed", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep = read_json(&dir.path().join("ex/counterexample.json"));
    assert_eq!(rep["seed"], 3);
    assert!(rep["max_relative_error"].as_f64().unwrap() < 1e-12);
    let n = &rep["limit_normal"];
    assert!((n[2].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let diagonal = rep["gaussian_limits"][1][1].as_f64().unwrap();
    assert!(diagonal.abs() > 0.1);
}

#[test]
fn triangle_example_passes_g2() {
    let dir = tempfile::tempdir().unwrap();
    triangle_config(dir.path());
    let rep = read_json(&dir.path().join("ex/triangle.check.json"));
    assert_eq!(rep["verdicts"], serde_json::json!([true, true, true]));
}

#[test]
fn cylinders_example_is_watertight() {
    let dir = tempfile::tempdir().unwrap();
    let o = abc(&["examples", "cylinders", "--out", "ex"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = stdout(&o).lines().find(|l| l.contains("shared curve")).unwrap().to_owned();
    let gap: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
    assert!(gap < 1e-9, "{line}");
}

#[test]
fn build_check_render_export_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    triangle_config(d);
    let o = abc(&["build", "--config", "ex/triangle.config.json", "--out", "b/tri.json"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("deg w nominal [27,27]"));
    let report = read_json(&d.join("b/tri.report.json"));
    assert_eq!(report["segments"], 3);

    let o = abc(&["check", "--config", "b/tri.json", "--level", "g2", "--out", "chk.json"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(&d.join("chk.json"))["level"], "G2");

    let o = abc(&["render", "--config", "b/tri.json", "--what", "isophotes", "--density", "12", "--light", "1,0,1", "--out", "iso.csv"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("iso.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let v: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((-1.0..=1.0).contains(&v));
        rows += 1;
    }
    assert!(rows > 20);

    let o = abc(&["render", "--config", "b/tri.json", "--what", "curvature", "--density", "12", "--out", "k.csv"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("max deviation"));

    let o = abc(&["render", "--config", "b/tri.json", "--density", "12", "--out", "mesh.obj"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let obj = std::fs::read_to_string(d.join("mesh.obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("f ")));

    let o = abc(&["export", "--config", "b/tri.json", "--mode", "hybrid", "--out", "x/tri.abc"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(d.join("x/tri.abc")).unwrap();
    assert!(text.starts_with("ABC-PATCHES 1\nmode hybrid\n"));
    assert!(d.join("x/tri.obj").exists());
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    triangle_config(d);
    for out in ["one.json", "two.json"] {
        let o = abc(&["build", "--config", "ex/triangle.config.json", "--out", out], d);
        assert_eq!(code(&o), 0);
    }
    let one = std::fs::read(d.join("one.json")).unwrap();
    assert_eq!(one, std::fs::read(d.join("two.json")).unwrap());
    for out in ["one.abc", "two.abc"] {
        let o = abc(&["export", "--config", "one.json", "--out", out], d);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(d.join("one.abc")).unwrap(), std::fs::read(d.join("two.abc")).unwrap());
}

#[test]
fn unconstrained_corners_fail_g2_verification() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg = read_json(&triangle_config(d));
    cfg["reparam"]["corner_jacobians"] = Value::Bool(false);
    std::fs::write(d.join("free.json"), cfg.to_string()).unwrap();
    let o = abc(&["check", "--config", "free.json", "--level", "g2"], d);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let f = failure(&o);
    assert_eq!(f["code"], "verification");
    assert_eq!(f["stage"], "check");
    assert!(stdout(&o).contains("jacobian false"));
    let o = abc(&["check", "--config", "free.json", "--level", "g1"], d);
    assert_eq!(code(&o), 0);
}

#[test]
fn segment_count_mismatch_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    triangle_config(d);
    let mut cfg = read_json(&d.join("ex/triangle.bundle.json"))["config"].clone();
    cfg["reparam"]["reparams"].as_array_mut().unwrap().pop();
    std::fs::write(d.join("bad.json"), cfg.to_string()).unwrap();
    let o = abc(&["build", "--config", "bad.json"], d);
    assert_eq!(code(&o), 2);
    let f = failure(&o);
    assert_eq!(f["code"], "validation");
    assert!(f["message"].as_str().unwrap().contains("reparam"));
}

#[test]
fn bad_arguments_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = abc(&["check", "--config", "missing.json"], d);
    assert_eq!(code(&o), 5);
    assert_eq!(failure(&o)["code"], "io");
    std::fs::write(d.join("junk.json"), "{ not json").unwrap();
    let o = abc(&["build", "--config", "junk.json"], d);
    assert_eq!(code(&o), 2);
    triangle_config(d);
    let o = abc(&["render", "--config", "ex/triangle.config.json", "--what", "isophotes", "--light", "0,0", "--out", "i.csv"], d);
    assert_eq!(code(&o), 2);
    assert_eq!(failure(&o)["stage"], "render");
}

//! End-to-end tests of the command-line surface: exit codes, report files,
//! determinism, and the solution round-trip through the verify kind.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kostant-lab"))
}

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn read_report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve2d_writes_an_ok_report_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = bin()
        .args(["solve2d", "--in"])
        .arg(corpus("solve2d_y.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = read_report(&out);
    assert_eq!(report["schema"], "kostant-lab/1");
    assert_eq!(report["status"], "ok");
    assert!(report["input_digest"].as_str().unwrap().len() == 64);
    assert!(report["solution"]["rational_term"].is_array());
}

#[test]
fn error_status_maps_to_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = bin()
        .args(["h1", "--in"])
        .arg(corpus("h1_nonclosed_error.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let report = read_report(&out);
    assert_eq!(report["status"], "error");
    assert_eq!(report["error"]["code"], "NOT_CLOSED");
}

#[test]
fn missing_input_exits_two() {
    let status = bin()
        .args(["solve2d", "--in", "/nonexistent/problem.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn kind_mismatch_is_rejected() {
    let output = bin()
        .args(["verify", "--in"])
        .arg(corpus("solve2d_y.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("SCHEMA_ERROR"), "stderr: {err}");
}

#[test]
fn reports_are_byte_identical_modulo_timings() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let status = bin()
            .args(["expand", "--in"])
            .arg(corpus("expand_jets.json"))
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        let mut report = read_report(&out);
        report["timings"] = Value::Null;
        reports.push(serde_json::to_string(&report).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn solution_roundtrips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = bin()
        .args(["solve2d", "--in"])
        .arg(corpus("solve2d_poly_flat.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = read_report(&out);
    let grid_max = report["residuals"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|r| r["grid_max"].as_f64())
        .next()
        .unwrap();
    let tolerance = 1e-6;
    assert!(grid_max <= tolerance);

    // re-ingest: verify the emitted solution against the original data
    let problem: Value =
        serde_json::from_str(&std::fs::read_to_string(corpus("solve2d_poly_flat.json")).unwrap())
            .unwrap();
    let verify_problem = serde_json::json!({
        "kind": "verify",
        "model": problem["model"],
        "data": {"solution": report["solution"], "rhs": problem["data"]},
        "options": {"order": problem["options"]["order"]}
    });
    let vin = dir.path().join("verify.json");
    std::fs::write(&vin, serde_json::to_string(&verify_problem).unwrap()).unwrap();
    let vout = dir.path().join("verify_report.json");
    let status = bin()
        .args(["verify", "--in"])
        .arg(&vin)
        .arg("--out")
        .arg(&vout)
        .status()
        .unwrap();
    assert!(status.success());
    let vreport = read_report(&vout);
    let vmax = vreport["residuals"][0]["grid_max"].as_f64().unwrap();
    assert!(
        vmax <= 2.0 * tolerance,
        "verify residual {vmax} exceeds twice the tolerance"
    );
}

#[test]
fn flag_overrides_take_effect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = bin()
        .args(["expand", "--in"])
        .arg(corpus("expand_jets.json"))
        .arg("--order")
        .arg("8")
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = read_report(&out);
    assert_eq!(report["solution"]["recursion"]["order"], 6);
}

#[test]
fn stdout_emission_when_out_is_omitted() {
    let output = bin()
        .args(["solve2d", "--in"])
        .arg(corpus("solve2d_y.json"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["status"], "ok");
}

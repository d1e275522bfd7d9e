//! End-to-end exercises of the command-line surface: exit codes, output
//! formats, and error reporting.

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::NamedTempFile;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

fn smdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smdp"))
        .args(args)
        .output()
        .expect("spawn smdp")
}

fn write_temp(contents: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

#[test]
fn validate_good_model_exits_zero() {
    let out = smdp(&["validate", &fixture("worked.json")]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn validate_row_sum_violation_exits_one_naming_bpc() {
    let model = write_temp(
        r#"{"states": 1,
            "decision_spaces": [{"type": "finite", "points": [{"label": "a", "value": 0.0}]}],
            "p": [{"a": [0.9]}], "T": [{"a": 1.0}], "d": [{"a": 1.0}]}"#,
    );
    let out = smdp(&["validate", model.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row sum"), "stderr: {stderr}");
    assert!(stderr.contains("BPC"), "stderr: {stderr}");
}

#[test]
fn validate_missing_file_exits_two() {
    let out = smdp(&["validate", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_malformed_json_exits_two() {
    let model = write_temp("{not json");
    let out = smdp(&["validate", model.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_flags_condition4_violation() {
    // The (a, x) decision combination splits the chain into two closed
    // classes, violating the single-ergodic-class condition.
    let model = write_temp(
        r#"{"states": 2,
            "decision_spaces": [
                {"type": "finite", "points": [{"label": "a", "value": 0.0}, {"label": "b", "value": 1.0}]},
                {"type": "finite", "points": [{"label": "x", "value": 0.0}, {"label": "y", "value": 1.0}]}
            ],
            "p": [{"a": [1.0, 0.0], "b": [0.5, 0.5]}, {"x": [0.0, 1.0], "y": [0.5, 0.5]}],
            "T": [{"a": 1.0, "b": 1.0}, {"x": 1.0, "y": 1.0}],
            "d": [{"a": 1.0, "b": 2.0}, {"x": 3.0, "y": 4.0}]}"#,
    );
    let out = smdp(&["validate", model.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("condition 4"), "stderr: {stderr}");
}

#[test]
fn eval_prints_both_routes() {
    let out = smdp(&["eval", &fixture("worked.json"), &fixture("worked_pure.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["multilinear"]["route"], "multilinear");
    assert_eq!(v["averaged"]["route"], "averaged-kernel");
    let i = v["multilinear"]["I"].as_f64().unwrap();
    assert!((i - 37.0 / 19.0).abs() < 1e-12);
    assert!(v["relative_difference"].as_f64().unwrap() < 1e-9);
}

#[test]
fn eval_rejects_bad_weights() {
    let strategy = write_temp(r#"{"mixed": [[{"point": "a", "weight": 0.4}], [{"point": "b", "weight": 1.0}]]}"#);
    let out = smdp(&[
        "eval",
        &fixture("worked.json"),
        strategy.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn testfn_header_is_bit_exact_and_rows_counted() {
    let model = write_temp(
        r#"{"states": 2,
            "decision_spaces": [
                {"type": "interval", "low": 0.0, "high": 1.0, "low_open": false, "high_open": false},
                {"type": "interval", "low": 0.0, "high": 1.0, "low_open": false, "high_open": false}
            ],
            "p": [["0.5", "0.5"], ["0.5", "0.5"]],
            "T": ["1 + u", "1"],
            "d": ["u", "1 - u"]}"#,
    );
    let out = smdp(&["testfn", model.path().to_str().unwrap(), "--grid", "10,10"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "u_1,u_2,A,B,C");
    assert_eq!(lines.len(), 1 + 100);
    // 17 significant digits per number.
    assert!(lines[1].contains("e0") || lines[1].contains("e-"), "line: {}", lines[1]);
}

#[test]
fn testfn_finite_axes_enumerate_points() {
    let model = write_temp(
        r#"{"states": 1,
            "decision_spaces": [{"type": "finite", "points": [
                {"label": "a", "value": 0.0}, {"label": "b", "value": 1.0}
            ]}],
            "p": [{"a": [1.0], "b": [1.0]}],
            "T": [{"a": 1.0, "b": 2.0}],
            "d": [{"a": 3.0, "b": 4.0}]}"#,
    );
    let out = smdp(&["testfn", model.path().to_str().unwrap()]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "u_1,A,B,C");
    assert_eq!(lines.len(), 1 + 2);
}

#[test]
fn testfn_failed_points_become_empty_cells() {
    // d has a pole at exactly 0.45 = the fifth midpoint of a 10-cell grid
    // on (0, 1). The 1024-point load-validation grid never lands on it (its
    // midpoints are dyadic), so the model loads but that one dump row fails.
    let failing = write_temp(
        r#"{"states": 1,
            "decision_spaces": [{"type": "interval", "low": 0.0, "high": 1.0, "low_open": true, "high_open": true}],
            "p": [["1"]],
            "T": ["1"],
            "d": ["1/(u - 0.45)"]}"#,
    );
    let out = smdp(&["testfn", failing.path().to_str().unwrap(), "--grid", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    let empty_rows = stdout.lines().filter(|l| l.ends_with(",,")).count();
    assert!(empty_rows > 0, "expected some failed rows; stderr: {stderr}");
    assert!(stderr.contains("warning"), "stderr: {stderr}");
}

#[test]
fn optimize_finite_fixture_attains() {
    let out = smdp(&["optimize", &fixture("worked.json"), "--sense", "max"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kind"], "attained");
    assert_eq!(v["heuristic_global"], false);
    assert!((v["value"].as_f64().unwrap() - 37.0 / 19.0).abs() < 1e-12);
}

#[test]
fn optimize_open_linear_is_eps_optimal() {
    let out = smdp(&["optimize", &fixture("linear_open.json"), "--sense", "max"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kind"], "eps_optimal");
}

#[test]
fn optimize_reciprocal_exits_four() {
    let out = smdp(&["optimize", &fixture("reciprocal.json"), "--sense", "max"]);
    assert_eq!(out.status.code(), Some(4));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kind"], "unbounded");
}

#[test]
fn optimize_set_overrides_apply() {
    let out = smdp(&[
        "optimize",
        &fixture("linear_open.json"),
        "--sense",
        "max",
        "--set",
        "epsilon=0.001",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["epsilon"].as_f64().unwrap(), 0.001);

    let bad = smdp(&[
        "optimize",
        &fixture("linear_open.json"),
        "--sense",
        "max",
        "--set",
        "nonsense=1",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn optimize_model_document_settings_apply_under_flags() {
    // Settings embedded in the model document take effect, and --set flags
    // override them.
    let model = write_temp(
        r#"{"states": 1,
            "decision_spaces": [{"type": "interval", "low": 0.0, "high": 1.0, "low_open": true, "high_open": true}],
            "p": [["1"]],
            "T": ["1"],
            "d": ["u"],
            "optimize": {"epsilon": 0.01}}"#,
    );
    let path = model.path().to_str().unwrap().to_string();
    let out = smdp(&["optimize", &path, "--sense", "max"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["epsilon"].as_f64().unwrap(), 0.01);

    let out = smdp(&["optimize", &path, "--sense", "max", "--set", "epsilon=0.0001"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["epsilon"].as_f64().unwrap(), 0.0001);
}

#[test]
fn verify_fixture_passes() {
    let out = smdp(&["verify", &fixture("worked.json"), "--seed", "7", "--budget", "25"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}

#[test]
fn verify_condition4_model_fails_with_exit_five() {
    // Mixing over the decision points hits the two-closed-classes
    // combination inside the multilinear expansion.
    let model = write_temp(
        r#"{"states": 2,
            "decision_spaces": [
                {"type": "finite", "points": [{"label": "a", "value": 0.0}, {"label": "b", "value": 1.0}]},
                {"type": "finite", "points": [{"label": "x", "value": 0.0}, {"label": "y", "value": 1.0}]}
            ],
            "p": [{"a": [1.0, 0.0], "b": [0.5, 0.5]}, {"x": [0.0, 1.0], "y": [0.5, 0.5]}],
            "T": [{"a": 1.0, "b": 1.0}, {"x": 1.0, "y": 1.0}],
            "d": [{"a": 1.0, "b": 2.0}, {"x": 3.0, "y": 4.0}]}"#,
    );
    let out = smdp(&["verify", model.path().to_str().unwrap(), "--seed", "3", "--budget", "40"]);
    assert_eq!(out.status.code(), Some(5));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("FAIL")), "stdout: {stdout}");
}

#[test]
fn verify_budget_zero_is_vacuous_pass() {
    let out = smdp(&["verify", &fixture("worked.json"), "--budget", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("vacuous"), "stderr: {stderr}");
}

#[test]
fn simulate_zero_jumps_exits_one() {
    let out = smdp(&[
        "simulate",
        &fixture("worked.json"),
        &fixture("worked_pure.json"),
        "--jumps",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_report_shape() {
    let out = smdp(&[
        "simulate",
        &fixture("worked.json"),
        &fixture("worked_pure.json"),
        "--jumps",
        "5000",
        "--seed",
        "2",
        "--sojourn",
        "det",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["jumps"].as_u64(), Some(5000));
    assert!(v["total_time"].as_f64().unwrap() > 0.0);
    assert!(v["empirical_ratio"].as_f64().is_some());
    assert!(v["half_width_95"].as_f64().is_some());
}

#[test]
fn stdout_carries_only_the_artifact() {
    // The manifest and diagnostics must go to stderr.
    let out = smdp(&["optimize", &fixture("worked.json"), "--sense", "max"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(serde_json::from_str::<serde_json::Value>(stdout.trim()).is_ok());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("manifest:"), "stderr: {stderr}");
}

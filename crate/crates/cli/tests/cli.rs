use std::path::PathBuf;
use std::process::Command;

use serde_json::{json, Value};

use ucp_dilation_cli::run::random_spec;
use ucp_dilation_cli::{exit_code, run_dims, run_random, run_verify, CliError, InstanceSpec};

fn spec(v: Value) -> InstanceSpec {
    InstanceSpec::from_json(&v.to_string()).unwrap()
}

fn identity_m2(level: usize) -> Value {
    json!({
        "algebra": {"blocks": [2]},
        "channel": {"kraus": [{"re": [[1.0, 0.0], [0.0, 1.0]], "im": [[0.0, 0.0], [0.0, 0.0]]}]},
        "level": level,
    })
}

fn uniform_c2(level: usize) -> Value {
    json!({
        "algebra": {"blocks": [1, 1]},
        "channel": {"stochastic": [[0.5, 0.5], [0.5, 0.5]]},
        "level": level,
    })
}

fn transpose_m2() -> Value {
    // Matrix-unit coordinates (e11, e12, e21, e22): the transpose swaps e12 and e21.
    let re = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let im = [[0.0; 4]; 4];
    json!({
        "algebra": {"blocks": [2]},
        "channel": {"superoperator": {"re": re, "im": im}},
        "level": 2,
    })
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ucp-dilation"))
}

fn write_spec(name: &str, v: &Value) -> PathBuf {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn identity_on_m2_passes_everything() {
    let mut v = identity_m2(2);
    v["checks"] = json!(ucp_dilation_cli::spec::ALL_CHECKS);
    let report = run_verify(&spec(v)).unwrap();
    assert!(report.passed, "{}", report.summary());
    assert_eq!(exit_code(&report), 0);
    for g in ucp_dilation_cli::spec::ALL_CHECKS {
        assert!(report.checks.iter().any(|c| c.group == *g), "no entries for {g}");
    }
    let dims = report.dims.as_ref().unwrap();
    assert!(dims.h_n.iter().all(|&d| d == 4));
}

#[test]
fn uniform_commutative_instance_reports_h3() {
    let report = run_verify(&spec(uniform_c2(3))).unwrap();
    assert!(report.passed, "{}", report.summary());
    let dims = report.dims.as_ref().unwrap();
    assert_eq!(dims.h_n, vec![2, 4, 8, 16]);
    let moments = report.moments.as_ref().unwrap();
    assert!(moments.passed && moments.max_difference < 1e-8);
    let diag = report.diagnostics.as_ref().unwrap();
    assert!(diag.central_support_is_projection);
}

#[test]
fn transpose_is_an_input_error() {
    let err = run_verify(&spec(transpose_m2())).unwrap_err();
    assert_eq!(err.kind(), "invalid_channel");

    let path = write_spec("transpose.json", &transpose_m2());
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("transpose-report.json");
    let status = binary().arg("verify").arg(&path).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["error"], "invalid_channel");
}

#[test]
fn schema_violations_are_rejected() {
    let mut v = uniform_c2(2);
    v["levle"] = json!(3);
    assert!(matches!(InstanceSpec::from_json(&v.to_string()), Err(CliError::Schema(_))));
    let mut v = uniform_c2(2);
    v["checks"] = json!(["gns", "nonsense"]);
    assert!(matches!(run_verify(&spec(v)), Err(CliError::Schema(_))));
    let mut v = uniform_c2(2);
    v["channel"] = json!({"stochastic": [[0.5, 0.6], [0.5, 0.5]]});
    assert!(run_verify(&spec(v)).is_err());

    let path = write_spec("bad.json", &json!({"algebra": {"blocks": [2]}}));
    assert_eq!(binary().arg("verify").arg(&path).status().unwrap().code(), Some(2));
}

#[test]
fn multi_block_random_is_rejected() {
    assert!(matches!(random_spec(&[2, 2], 2, 1, 2), Err(CliError::Schema(_))));
    let status = binary()
        .args(["random", "--blocks", "2,2", "--kraus", "2", "--seed", "1", "--level", "2"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn random_commutative_instance_passes() {
    let report = run_random(&[1, 1, 1], 2, 7, 3).unwrap();
    assert!(report.passed, "{}", report.summary());
}

#[test]
fn random_runs_are_reproducible() {
    let a = run_random(&[2], 2, 42, 2).unwrap();
    let b = run_random(&[2], 2, 42, 2).unwrap();
    assert_eq!(a.numerical_json(), b.numerical_json());
    let c = run_random(&[2], 2, 43, 2).unwrap();
    assert_ne!(a.numerical_json(), c.numerical_json());
}

#[test]
fn dims_without_checks() {
    let table = run_dims(&spec(identity_m2(3))).unwrap();
    assert_eq!(table.h_n, vec![4, 4, 4, 4]);
    let table = run_dims(&spec(uniform_c2(3))).unwrap();
    assert_eq!(table.h_n, vec![2, 4, 8, 16]);
    assert!(table.render().contains("K_3"));

    let mut v = uniform_c2(4);
    v["dim_cap"] = json!(12);
    let err = run_dims(&spec(v.clone())).unwrap_err();
    assert_eq!(err.kind(), "size_cap");
    assert!(err.to_string().contains("_3") || err.to_string().contains("_4"), "{err}");

    let path = write_spec("capped.json", &v);
    let out = binary().arg("dims").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tolerance_override_can_fail_a_run() {
    let path = write_spec("uniform.json", &uniform_c2(1));
    let ok = binary().arg("verify").arg(&path).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("overall: PASS"));
    let strict = binary().arg("verify").arg(&path).args(["--tol", "1e-30"]).output().unwrap();
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn explicit_moment_words() {
    let mut v = uniform_c2(2);
    v["checks"] = json!(["equivalence"]);
    v["moments"] = json!({"words": [[[0, 2], [0, 1]], [[1, 2, 1], [1, 1, 0]]]});
    let report = run_verify(&spec(v)).unwrap();
    let m = report.moments.unwrap();
    assert_eq!(m.rows.len(), 2);
    assert!(m.passed);
    // e_0 T²(e_1) = e_0 / 2, and T(e_1 T(e_1) e_0) = 0.
    let close = |got: &[[f64; 2]], want: [f64; 2]| {
        got.iter().zip(want).all(|(z, w)| (z[0] - w).abs() < 1e-12 && z[1].abs() < 1e-12)
    };
    assert!(close(&m.rows[0].bs, [0.5, 0.0]), "{:?}", m.rows[0].bs);
    assert!(close(&m.rows[1].bs, [0.0, 0.0]), "{:?}", m.rows[1].bs);
}

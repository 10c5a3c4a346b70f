use std::process::{Command, Output};

use serde_json::Value;

fn zetasize(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zetasize"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const CUSP: &str = r#"{"n":2,"terms":[{"exp":[2,0],"coef":[1,0]},{"exp":[0,3],"coef":[1,0]}]}"#;

#[test]
fn estimate_of_a_simple_pole() {
    let out = zetasize(&["estimate", "--P", "[[1,0]]", "--Q", "[[0,0],[1,0]]", "--eps", "0", "--delta", "3/2", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["result"]["value"], 1.0);
    assert_eq!(v["config"]["params"]["delta"], "3/2");
    assert_eq!(v["input_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn double_root_is_infinite() {
    let out = zetasize(&["estimate", "--Q", "[[0,0],[0,0],[1,0]]", "--delta", "3/2"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json_of(&out)["result"]["value"], "inf");
}

#[test]
fn degenerate_pair_names_the_index() {
    let out = zetasize(&["estimate", "--Q", "[[0,0],[1,0]]", "--delta", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(ν, k) = (0, 0)"), "{err}");
}

#[test]
fn decimal_exponents_are_rejected() {
    let out = zetasize(&["estimate", "--Q", "[[0,0],[1,0]]", "--delta", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn same_inputs_same_hash() {
    let args = ["finiteness", "--Q", "[[0,0],[0,0],[1,0]]", "--P", "[[0,0],[1,0]]", "--eps", "1", "--delta", "1"];
    let (a, b) = (json_of(&zetasize(&args)), json_of(&zetasize(&args)));
    assert_eq!(a, b);
    assert_eq!(a["result"]["finite"], true);
    assert_eq!(a["result"]["roots"][0]["slack"], "1");
}

#[test]
fn suite_names_are_checked() {
    let out = zetasize(&["suite", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    let out = zetasize(&["suite", "anchor"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_of(&out)["result"][0]["passed"], true);
}

#[test]
fn empty_family_is_a_usage_error() {
    let out = zetasize(&["compare", "--family", r#"{"eps":"0","delta":"3/2","instances":[]}"#]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage"));
}

#[test]
fn stub_oracle_gives_unit_ratios() {
    let spec = r#"{"eps":"0","delta":"3/2","lambda":4,"oracle":"stub",
        "sweep":{"kind":"planted-gap","roots":[[0,0],[1,0]],"gaps":[0.1,0.01,0.001]}}"#;
    let out = zetasize(&["compare", "--family", spec, "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.split(',').nth(3) == Some("1")), "{text}");
}

#[test]
fn gap_sweep_reports_a_trend() {
    let spec = r#"{"eps":"0","delta":"3/2","lambda":4,
        "sweep":{"kind":"planted-gap","roots":[[0,0],[1,0]],"gaps":[0.1,0.01,0.001]}}"#;
    let out = zetasize(&["compare", "--family", spec]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert!(v["result"]["report"]["trend_stat"].is_number());
    assert!(v["result"]["spread"].as_f64().unwrap() < 1.1);
}

#[test]
fn finiteness_disagreement_exits_two() {
    // the coarse tolerance merges two roots 1e-4 apart into a double root;
    // the quadrature still sees two simple ones
    let spec = r#"{"eps":"0","delta":"3/2","instances":[{"Q":[[1e-8,0],[0,0],[1,0]]}]}"#;
    let out = zetasize(&["compare", "--family", spec, "--tol", "1e-3"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json_of(&out)["result"]["disagreement"].is_object());
}

#[test]
fn critical_exponent_of_the_cusp() {
    let out = zetasize(&["lct", "--germ", CUSP]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out)["result"]["value"].as_f64().unwrap();
    assert!((v - 5.0 / 3.0).abs() < 0.05, "{v}");
}

#[test]
fn iterated_verdicts() {
    let out = zetasize(&["stability", "iterated", "--germ", CUSP, "--delta", "1.8"]);
    assert_eq!(out.status.code(), Some(3));
    let out = zetasize(&["stability", "iterated", "--germ", CUSP, "--delta", "1.4"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn distribution_csv() {
    let out = zetasize(&[
        "distfn",
        "--germ",
        r#"{"n":1,"terms":[{"exp":[2],"coef":[1,0]}]}"#,
        "--alphas",
        "0.1,0.5",
        "--delta",
        "1/2",
        "--format",
        "csv",
    ]);
    // several-variable commands take δ as a plain float
    assert_eq!(out.status.code(), Some(1));
    let out = zetasize(&[
        "distfn",
        "--germ",
        r#"{"n":1,"terms":[{"exp":[2],"coef":[1,0]}]}"#,
        "--alphas",
        "0.1,0.5",
        "--delta",
        "0.5",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# config: "));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn csv_is_refused_where_unsupported() {
    let out = zetasize(&["estimate", "--Q", "[[0,0],[1,0]]", "--delta", "1", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(1));
}

use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_concordance")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn amatrix_two() {
    let out = run(&["amatrix", "--d", "2"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[[1,1],[1,0]]");
}

#[test]
fn seven_24ths_exit_three() {
    let out = run(&["check", "--d", "3", "--pairs", "7/24,7/24,7/24"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not attainable"));
    assert_eq!(json(&out)["feasible"], false);
}

#[test]
fn bounds_from_a_signature_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kendall.json");
    fs::write(
        &path,
        r#"{"d":4,"scale":"tau","labels":[[1,2],[1,3],[1,4],[2,3],[2,4],[3,4]],"values":[-0.19,-0.29,0.49,-0.34,0.30,-0.79]}"#,
    )
    .unwrap();
    let out = run(&["bounds", "--signature", path.to_str().unwrap(), "--target", "1,2,3,4"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!((v["lower"][0].as_f64().unwrap() - 0.04).abs() < 1e-9);
    assert!((v["upper"][0].as_f64().unwrap() - 0.0425).abs() < 1e-9);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["amatrix"]).status.code(), Some(2));
    assert_eq!(run(&["check", "--d", "3", "--pairs", "1/2,1/2"]).status.code(), Some(2));
    assert_eq!(run(&["check", "--d", "3", "--pairs", "1/0,1/2,1/2"]).status.code(), Some(2));
    assert_eq!(run(&["amatrix", "--d", "2", "--format", "xml"]).status.code(), Some(2));
}

#[test]
fn solve_and_signature_round_trip() {
    let out = run(&["signature", "--d", "3", "--w", "0.4,0.2,0.1,0.3"]);
    assert!(out.status.success());
    let sig = json(&out);
    let values: Vec<String> = sig["values"].as_array().unwrap()[1..].iter().map(|v| v.to_string()).collect();
    let out = run(&["solve", "--d", "3", "--pairs", &values.join(",")]);
    assert!(out.status.success());
    let w: Vec<f64> = serde_json::from_value(json(&out)["w"].clone()).unwrap();
    for (a, b) in w.iter().zip([0.4, 0.2, 0.1, 0.3]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn solve_reports_negative_weights() {
    let out = run(&["solve", "--d", "3", "--pairs", "7/24,7/24,7/24"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sample_then_estimate_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    let out = run(&[
        "sample", "--d", "3", "--w", "0.5,0.25,0.25,0", "--n", "2000", "--seed", "9", "--format", "csv", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("u1,u2,u3\n"));
    assert_eq!(text.lines().count(), 2001);

    let out = run(&["estimate", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["n"], 2000);
    // κ_12 = w1 + w2 = 0.75.
    assert!((v["signature"]["values"][1].as_f64().unwrap() - 0.75).abs() < 0.03);

    let out = run(&["validate", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tlimit_csv_output() {
    let out = run(&["tlimit", "--d", "3", "--pairs", "0.2,0.5,0.8", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("k,w\n1,0.51"), "{text}");
}

#[test]
fn elliptical_check_of_the_kendall_matrix() {
    let out = run(&["elliptical", "--check", "--tau", "--d", "4", "--pairs", "-0.19,-0.29,0.49,-0.34,0.30,-0.79"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert_eq!(v["elliptical"]["attainable"], false);
    assert_eq!(v["cut_polytope"]["feasible"], true);
}

#[test]
fn bmatrix_is_exact() {
    let out = run(&["bmatrix", "--d", "3"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["exact"][1][1], "1/3");
}

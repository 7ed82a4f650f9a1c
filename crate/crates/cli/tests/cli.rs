use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn invalg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invalg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn valid_catalog_entries_pass() {
    for key in ["so3", "abelian", "tangent(2)"] {
        let o = invalg(&["check", key, "--samples", "20"]);
        assert_eq!(code(&o), 0, "{key}: {}", stdout(&o));
    }
}

#[test]
fn broken_jacobi_reports_flip() {
    let o = invalg(&["check", "broken-jacobi", "--samples", "20", "--format", "json"]);
    assert_eq!(code(&o), 1);
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let flip = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "axioms/flip")
        .unwrap();
    assert_eq!(flip["passed"], false);
    assert!(flip["max_residual"].as_f64().unwrap() > 1e-3);
    assert!(flip["worst_input"].is_string());
}

#[test]
fn zero_samples_gives_empty_report() {
    let o = invalg(&["check", "so3", "--samples", "0", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["checks"].as_array().unwrap().len(), 0);
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&invalg(&["check", "no-such-key"])), 2);
    let bad = write(dir.path(), "bad.json", "{\"schema_version\": 1, \"kind\": \"algebroid\"");
    assert_eq!(code(&invalg(&["check", &bad])), 2);
    let inconsistent = write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "kind": "algebroid", "dim_m": 0, "dim_a": 2, "structure": [
            {"i": 0, "j": 1, "k": 0, "terms": [{"coeff": 1.0, "exponents": []}]},
            {"i": 1, "j": 0, "k": 0, "terms": [{"coeff": 1.0, "exponents": []}]}]}"#,
    );
    let o = invalg(&["check", &inconsistent]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("antisymmetric"));
    assert_eq!(code(&invalg(&["check", "so3", "--tolerance", "flip"])), 2);
    assert_eq!(code(&invalg(&["transport", "so3"])), 2);
}

#[test]
fn tolerance_override_flips_verdict() {
    let o = invalg(&["check", "broken-jacobi", "--samples", "10", "--tolerance", "flip=1e9"]);
    assert!(stdout(&o).contains("PASS axioms/flip"));
    let o = invalg(&["check", "so3", "--samples", "10", "--tolerance", "axioms/unit=1e-300"]);
    // unit is exactly zero, so even a tiny tolerance holds
    assert_eq!(code(&o), 0);
}

#[test]
fn file_fixture_matches_catalog_key() {
    let dir = tempfile::tempdir().unwrap();
    let so3 = write(
        dir.path(),
        "so3.json",
        r#"{"schema_version": 1, "kind": "algebroid", "name": "so3", "dim_m": 0, "dim_a": 3, "structure": [
            {"i": 0, "j": 1, "k": 2, "terms": [{"coeff": 1.0, "exponents": []}]},
            {"i": 1, "j": 2, "k": 0, "terms": [{"coeff": 1.0, "exponents": []}]},
            {"i": 2, "j": 0, "k": 1, "terms": [{"coeff": 1.0, "exponents": []}]}]}"#,
    );
    let from_file = invalg(&["check", &so3, "--samples", "15", "--format", "csv"]);
    let from_key = invalg(&["check", "so3", "--samples", "15", "--format", "csv"]);
    assert_eq!(code(&from_file), 0);
    assert_eq!(from_file.stdout, from_key.stdout);
}

#[test]
fn explicit_sections_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let section = |name: &str, c: f64| {
        write(
            dir.path(),
            name,
            &format!(
                r#"{{"schema_version": 1, "kind": "section", "poly": {{"in_dim": 2, "out_dim": 2, "terms": [
                    [{{"coeff": {c}, "exponents": [1, 0]}}], [{{"coeff": 1.0, "exponents": [0, 2]}}]]}}}}"#
            ),
        )
    };
    let (x, y, z) = (section("x.json", 1.0), section("y.json", -2.0), section("z.json", 0.5));
    let f = write(
        dir.path(),
        "f.json",
        r#"{"schema_version": 1, "kind": "scalar-field", "poly": {"in_dim": 2, "out_dim": 1, "terms": [
            [{"coeff": 1.0, "exponents": [1, 1]}, {"coeff": 3.0, "exponents": [0, 3]}]]}}"#,
    );
    let o = invalg(&[
        "check", "tangent(2)", "--samples", "10", "--section", &x, "--section", &y, "--section", &z, "--field", &f,
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("bracket/leibniz"));
}

#[test]
fn so3_to_flip_then_to_bracket() {
    let dir = tempfile::tempdir().unwrap();
    let flip = dir.path().join("flip.json");
    let o = invalg(&["convert", "to-flip", "so3", "--samples", "5", "--out", flip.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let out: Value = serde_json::from_str(&fs::read_to_string(&flip).unwrap()).unwrap();
    assert_eq!(out["table"].as_array().unwrap().len(), 5);
    let fixture = write(dir.path(), "fixture.json", &out["fixture"].to_string());

    let o = invalg(&["convert", "to-bracket", &fixture]);
    assert_eq!(code(&o), 0);
    let back: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let c = &back["structure_constants"];
    // [e1, e2] = e3 and cyclic
    for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        assert!((c[i][j][k].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!((c[j][i][k].as_f64().unwrap() + 1.0).abs() < 1e-12);
    }
}

#[test]
fn abelian_flip_has_no_correction() {
    let o = invalg(&["convert", "to-flip", "abelian", "--samples", "8"]);
    let out: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for row in out["table"].as_array().unwrap() {
        assert!(row["correction"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
    }
}

#[test]
fn group_to_bracket_gives_minus_epsilon() {
    let o = invalg(&["convert", "to-bracket", "so3", "--samples", "10"]);
    assert_eq!(code(&o), 0);
    let out: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let c = &out["structure_constants"];
    assert!((c[0][1][2].as_f64().unwrap() + 1.0).abs() < 1e-12);
    assert!((c[1][2][0].as_f64().unwrap() + 1.0).abs() < 1e-12);
    assert_eq!(code(&invalg(&["convert", "to-flip", "tangent-path(2)"])), 2);
}

#[test]
fn differentiate_group_reports_sign() {
    let o = invalg(&["differentiate-group", "sl2", "--samples", "20"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("note bracket-sign: -1"));
    let o = invalg(&["differentiate-group", "pair-groupoid(3)", "--samples", "20"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("PASS is-c-of-w"));
}

#[test]
fn transport_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let o = invalg(&["transport", "tangent-path(2)", "--step", "1e-2", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("PASS closed-form"));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,m0,m1,b0,b1\n"));
    assert_eq!(text.lines().count(), 102);
}

#[test]
fn zero_path_gives_constant_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write(
        dir.path(),
        "zero.json",
        r#"{"schema_version": 1, "kind": "apath", "algebroid": {"catalog": "so3"}, "t_end": 1.0,
            "phi": {"in_dim": 1, "out_dim": 6, "terms": [[], [], [], [], [], []]},
            "a0": {"m": [], "a": [0.5, -1.0, 2.0]}}"#,
    );
    let csv = dir.path().join("z.csv");
    let o = invalg(&["transport", &fixture, "--step", "0.1", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    for line in fs::read_to_string(&csv).unwrap().lines().skip(1) {
        assert!(line.ends_with(",5e-1,-1e0,2e0"), "{line}");
    }
}

#[test]
fn composability_violation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write(
        dir.path(),
        "p.json",
        r#"{"schema_version": 1, "kind": "apath", "algebroid": {"catalog": "tangent(1)"}, "t_end": 1.0,
            "phi": {"in_dim": 1, "out_dim": 4, "terms": [
                [{"coeff": 1.0, "exponents": [1]}], [{"coeff": 1.0, "exponents": [0]}],
                [{"coeff": 1.0, "exponents": [0]}], []]},
            "a0": {"m": [0.0], "a": [3.0]}}"#,
    );
    let o = invalg(&["transport", &fixture]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not composable"));
}

#[test]
fn homotopy_discrepancy_reported() {
    let o = invalg(&["transport", "tangent-homotopy-invalid", "--step", "1e-2", "--format", "json"]);
    assert_eq!(code(&o), 1);
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let d = r["checks"].as_array().unwrap().iter().find(|c| c["name"] == "discrepancy").unwrap();
    assert!(d["max_residual"].as_f64().unwrap() > 1e-3);
}

#[test]
fn catalog_lists_every_kind() {
    let o = invalg(&["catalog", "list", "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let kinds: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    for k in ["algebroid", "group", "path", "homotopy"] {
        assert!(kinds.contains(&k));
    }
    assert!(stdout(&o).contains("broken-jacobi"));
}

//! End-to-end checks of the `qpr` command line.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use qpreduce::cli::{execute, Outcome, EXIT_INPUT, EXIT_NOT_REDUCIBLE, EXIT_OK, EXIT_VERIFY};
use qpreduce::parse_raw_system;

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Outcome {
    execute(std::iter::once("qpr").chain(args.iter().copied()))
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut argv = vec!["--json"];
    argv.extend_from_slice(args);
    let out = run(&argv);
    let value = serde_json::from_str(&out.output).expect("valid JSON");
    (out.code, value)
}

fn binds(pairs: &[(&str, &str)]) -> Vec<String> {
    pairs
        .iter()
        .flat_map(|(k, v)| ["--bind".to_string(), format!("{k}={v}")])
        .collect()
}

fn maxwell_qmt(dir: &Path) -> PathBuf {
    let path = dir.join("c.csv");
    std::fs::write(&path, "1,1/2,1/2\n2,1/2,1/2\n2,1,0\n").unwrap();
    path
}

#[test]
fn classify_euler() {
    let out = run(&["classify", &fixture("euler.qp")]);
    assert_eq!(out.code, EXIT_OK);
    assert_eq!(out.output.trim(), "CaseI");
    let (code, v) = json(&["classify", &fixture("euler.qp")]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["case"], "CaseI");
    assert_eq!(v["schema"], "qpr-report/1");
}

#[test]
fn maxwell_conditions_are_unsatisfiable() {
    let out = run(&["conditions", &fixture("maxwell_bloch.qp")]);
    assert_eq!(out.code, EXIT_NOT_REDUCIBLE, "{}", out.output);
    assert!(out.output.contains("unsatisfiable"), "{}", out.output);
    let (code, v) = json(&["conditions", &fixture("maxwell_bloch.qp")]);
    assert_eq!(code, EXIT_NOT_REDUCIBLE);
    assert_eq!(v["conditions"]["gamma"].as_array().unwrap().len(), 4);
    assert_eq!(v["conditions"]["verdict"], "unsatisfiable");
    assert_eq!(v["exit_code"], EXIT_NOT_REDUCIBLE);
}

#[test]
fn maxwell_conditions_with_x30_bound() {
    let (code, v) = json(&[
        "conditions",
        &fixture("maxwell_bloch.qp"),
        "--bind",
        "x30=0",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(v["conditions"]["verdict"], "needs-binding");
}

#[test]
fn reduce_halphen_writes_reduced_system() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("out.qp");
    let out = run(&[
        "reduce",
        &fixture("halphen.qp"),
        "-o",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.code, EXIT_OK, "{}", out.output);
    let written = std::fs::read_to_string(&out_path).unwrap();
    let got = parse_raw_system(&written).unwrap();
    let want = parse_raw_system(
        "vars: y1, y2, y3;\ny1' = y1*(y2*y3 - y2 - y3)\n\
         y2' = -y2 + y2^2 - y2^2*y3 + y3\ny3' = -y3 + y3^2 - y2*y3^2 + y2",
    )
    .unwrap();
    assert!(got.same_vector_field(&want), "{written}");
}

#[test]
fn full_maxwell_reduce_is_not_reducible() {
    let (code, v) = json(&["reduce", &fixture("maxwell_bloch.qp")]);
    assert_eq!(code, EXIT_NOT_REDUCIBLE);
    assert!(v["not_reducible"].is_object(), "{v}");
    assert_eq!(v["not_reducible"]["conditions"]["verdict"], "unsatisfiable");
}

#[test]
fn reports_are_byte_identical() {
    for args in [
        vec!["export", "--format", "json"],
        vec!["--json", "reduce"],
        vec!["--json", "conditions"],
        vec!["--json", "parse"],
    ] {
        for name in ["euler.qp", "halphen.qp", "maxwell_bloch.qp", "riccati5.qp"] {
            let mut argv = args.clone();
            let path = fixture(name);
            argv.push(&path);
            let a = run(&argv);
            let b = run(&argv);
            assert_eq!(a, b, "{argv:?}");
            assert!(serde_json::from_str::<Value>(&a.output).is_ok());
        }
    }
}

#[test]
fn json_rationals_are_strings() {
    let (_, v) = json(&["reduce", "--policy", "cvm", &fixture("euler.qp")]);
    assert_eq!(
        v["reduction"]["C"][0],
        serde_json::json!(["1/1", "1/2", "1/2"])
    );
    assert_eq!(v["reduction"]["case"], "CaseI");
}

#[test]
fn export_text_and_json() {
    let out = run(&["export", &fixture("maxwell_bloch.qp"), "--format", "text"]);
    assert_eq!(out.code, EXIT_OK);
    assert!(out.output.contains("reduction_error"), "{}", out.output);
    let out = run(&["export", &fixture("halphen.qp"), "--format", "json"]);
    let v: Value = serde_json::from_str(&out.output).unwrap();
    assert_eq!(v["command"], "export");
    assert_eq!(v["input"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn input_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.qp");
    std::fs::write(&bad, "x1' = x1^a\n").unwrap();
    let out = run(&["parse", bad.to_str().unwrap()]);
    assert_eq!(out.code, EXIT_INPUT);
    assert!(out.output.contains("1:"), "{}", out.output);

    assert_eq!(run(&["classify", "/nonexistent.qp"]).code, EXIT_INPUT);

    // Unbound parameters are a hard error for numeric commands.
    let out = run(&[
        "verify",
        &fixture("euler.qp"),
        "--x0",
        "1,1,1",
        "--t-end",
        "0.1",
    ]);
    assert_eq!(out.code, EXIT_INPUT, "{}", out.output);
    assert!(out.output.contains("unbound"), "{}", out.output);

    let out = run(&[
        "verify",
        &fixture("halphen.qp"),
        "--x0",
        "1,2",
        "--t-end",
        "0.1",
    ]);
    assert_eq!(out.code, EXIT_INPUT);
}

#[test]
fn verification_failure_exits_4() {
    let mut argv: Vec<String> = ["verify", &fixture("euler.qp"), "--policy", "cvm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    argv.extend(binds(&[("a1", "1"), ("a2", "2"), ("a3", "3")]));
    argv.extend(["--x0", "1,0.5,0.3333333333333333", "--t-end", "1"].map(String::from));
    let out = execute(std::iter::once("qpr".to_string()).chain(argv));
    assert_eq!(out.code, EXIT_VERIFY, "{}", out.output);
}

struct Case {
    file: &'static str,
    reduce: Vec<String>,
    verify: Vec<String>,
    x0: &'static str,
    t_end: &'static str,
}

fn riccati_binds(n: usize) -> Vec<String> {
    let mut pairs = Vec::new();
    for i in 1..=n {
        pairs.push((format!("l{i}"), i.to_string()));
        pairs.push((format!("a{i}"), "-1".to_string()));
    }
    let refs: Vec<(&str, &str)> = pairs
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    binds(&refs)
}

#[test]
fn reduce_then_verify_round_trip_for_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let qmt = maxwell_qmt(dir.path());
    let maxwell_reduce: Vec<String> = binds(&[("x30", "0"), ("a1", "1"), ("a3", "2"), ("a4", "2")])
        .into_iter()
        .chain([
            "--qmt".into(),
            qmt.to_str().unwrap().into(),
            "--prefactor".into(),
            "a2".into(),
        ])
        .collect();
    let cases = vec![
        Case {
            file: "euler.qp",
            reduce: vec!["--policy".into(), "cvm".into()],
            verify: binds(&[("a1", "1"), ("a2", "2"), ("a3", "3")]),
            x0: "1,0.5,0.3333333333333333",
            t_end: "0.5",
        },
        Case {
            file: "halphen.qp",
            reduce: vec![],
            verify: vec![],
            x0: "1,2,3",
            t_end: "0.3",
        },
        Case {
            file: "maxwell_bloch.qp",
            reduce: maxwell_reduce,
            verify: binds(&[("a2", "1")]),
            x0: "0.1,0.1,1",
            t_end: "1",
        },
        Case {
            file: "riccati3.qp",
            reduce: vec![],
            verify: riccati_binds(3),
            x0: "1,1,1",
            t_end: "0.5",
        },
        Case {
            file: "riccati5.qp",
            reduce: vec![],
            verify: riccati_binds(5),
            x0: "1,1,1,1,1",
            t_end: "0.5",
        },
    ];
    for case in cases {
        let out_path = dir.path().join(format!("reduced_{}", case.file));
        let out_str = out_path.to_str().unwrap().to_string();
        let mut argv = vec!["qpr".to_string(), "reduce".into(), fixture(case.file)];
        argv.extend(case.reduce.iter().cloned());
        argv.extend(["-o".into(), out_str.clone()]);
        let out = execute(argv);
        assert_eq!(out.code, EXIT_OK, "{}: {}", case.file, out.output);

        let mut argv = vec![
            "qpr".to_string(),
            "--json".into(),
            "verify".into(),
            fixture(case.file),
        ];
        argv.extend(case.reduce.iter().cloned());
        argv.extend(case.verify.iter().cloned());
        argv.extend([
            "--x0".into(),
            case.x0.into(),
            "--t-end".into(),
            case.t_end.into(),
            "--reduced".into(),
            out_str,
        ]);
        let out = execute(argv);
        assert_eq!(out.code, EXIT_OK, "{}: {}", case.file, out.output);
        let v: Value = serde_json::from_str(&out.output).unwrap();
        assert_eq!(v["reduced_file_matches"], true, "{}", case.file);
        assert_eq!(v["verification"]["passed"], true, "{}", case.file);
    }
}

#[test]
fn sequential_and_parallel_verification_agree() {
    let base = [
        "--json",
        "verify",
        &fixture("halphen.qp"),
        "--x0",
        "1,2,3",
        "--t-end",
        "0.3",
    ];
    let par = run(&base);
    let mut seq_args = base.to_vec();
    seq_args.push("--sequential");
    let seq = run(&seq_args);
    assert_eq!(par.code, EXIT_OK);
    let a: Value = serde_json::from_str(&par.output).unwrap();
    let b: Value = serde_json::from_str(&seq.output).unwrap();
    assert_eq!(a["verification"], b["verification"]);
}

#[test]
fn binary_prints_and_exits_with_code() {
    let bin = env!("CARGO_BIN_EXE_qpr");
    let out = Command::new(bin)
        .args(["classify", &fixture("halphen.qp")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "CaseII");
    let out = Command::new(bin)
        .args(["conditions", &fixture("maxwell_bloch.qp")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_NOT_REDUCIBLE));
}

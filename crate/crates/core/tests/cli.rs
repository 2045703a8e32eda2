use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn numindex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_numindex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const PLANE_P1: &str = r#"{"leaves":[1,1],"exponents":[],"flat_p":1}"#;
const PLANE_P2: &str = r#"{"leaves":[1,1],"exponents":[],"flat_p":2}"#;

#[test]
fn nu_examples() {
    let dir = tempfile::tempdir().unwrap();
    let id = write(dir.path(), "id.json", r#"{"dim":2,"rows":[[1,0],[0,1]]}"#);
    let rot = write(dir.path(), "rot.json", r#"{"dim":2,"rows":[[0,-1],[1,0]]}"#);
    let shift = write(
        dir.path(),
        "shift.json",
        r#"{"dim":2,"rows":[[0,0],[1,0]]}"#,
    );

    let out = numindex(&["nu", "--space", PLANE_P2, "--op", &id]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["result"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let out = numindex(&["nu", "--space", PLANE_P2, "--op", &rot]);
    assert!(json(&out)["result"]["value"].as_f64().unwrap() <= 1e-9);

    let out = numindex(&["nu", "--space", PLANE_P1, "--op", &shift]);
    let report = json(&out);
    assert!((report["result"]["value"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert_eq!(report["config"]["seed"], 0);
    assert_eq!(report["config"]["budget"], 64);
    assert!(report["result"]["witness"]["x"].is_array());
    assert!(report["result"]["provenance"]["method"].is_string());
}

#[test]
fn operator_on_a_lower_level() {
    let dir = tempfile::tempdir().unwrap();
    let op = write(dir.path(), "op.json", r#"{"dim":1,"rows":[[-2.5]]}"#);
    let out = numindex(&["opnorm", "--space", PLANE_P2, "--op", &op]);
    let report = json(&out);
    assert_eq!(report["config"]["m"], 1);
    assert!((report["result"]["value"].as_f64().unwrap() - 2.5).abs() < 1e-12);

    let out = numindex(&["n1", "--space", PLANE_P2, "--op", &op]);
    assert!((json(&out)["result"]["value"].as_f64().unwrap() - 2.5).abs() < 1e-9);

    let out = numindex(&["wseq", "--space", PLANE_P2, "--op", &op]);
    let report = json(&out);
    assert_eq!(report["result"]["values"].as_array().unwrap().len(), 2);
    assert!(report["result"]["checks"]["spread"].as_f64().unwrap() < 1e-9);
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let ragged = write(dir.path(), "ragged.json", r#"{"dim":2,"rows":[[1,0],[0]]}"#);
    let extra = write(
        dir.path(),
        "extra.json",
        r#"{"dim":2,"rows":[[1,0],[0,1]],"scale":2}"#,
    );
    let odd = write(
        dir.path(),
        "odd.json",
        r#"{"dim":3,"rows":[[1,0,0],[0,1,0],[0,0,1]]}"#,
    );
    for op in [&ragged, &extra, &odd] {
        let out = numindex(&["nu", "--space", PLANE_P2, "--op", op]);
        assert_eq!(out.status.code(), Some(2), "{op}");
        assert!(!out.stderr.is_empty());
    }
    let out = numindex(&[
        "nu",
        "--space",
        r#"{"leaves":[1,1],"flat_p":0.5}"#,
        "--op",
        &ragged,
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = numindex(&["index"]);
    assert_eq!(out.status.code(), Some(2));
    let out = numindex(&["index", "--space", PLANE_P2, "--tol", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn index_examples() {
    let out = numindex(&["index", "--space", PLANE_P2, "--budget", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# numindex"));
    assert!(text.contains("m,n_hat,n1_hat,witness_file,restarts,seed,flag"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    assert!(rows[0][1].parse::<f64>().unwrap() <= 1e-6);

    let out = numindex(&["index", "--space", r#"{"leaves":[1],"flat_p":3}"#]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0][1], "1");

    let out = numindex(&["index", "--space", PLANE_P1, "--budget", "2"]);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert!(rows[0][1].parse::<f64>().unwrap() >= 0.98);
}

#[test]
fn limit_scan_writes_csv_and_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scan.csv");
    let space = r#"{"leaves":[1,1,1],"flat_p":2}"#;
    let out = numindex(&[
        "limit-scan",
        "--space",
        space,
        "--m-range",
        "1..3",
        "--budget",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("pass"), "{summary}");
    let rows = csv_rows(&std::fs::read_to_string(&csv).unwrap());
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], (i + 1).to_string());
        assert_eq!(row[6], "ok");
        let witness: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(&row[3])).unwrap())
                .unwrap();
        assert_eq!(witness["n_hat"]["witness"]["dim"], i + 1);
    }
}

#[test]
fn limit_scan_usage_errors() {
    let space = r#"{"leaves":[1,1,1],"flat_p":2}"#;
    let out = numindex(&["limit-scan", "--space", space, "--m-range", "3..1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = numindex(&["limit-scan", "--space", space, "--m-range", "1..5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = numindex(&["limit-scan", "--space", r#"{"leaves":[3],"flat_p":2}"#]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_default_passes() {
    let out = numindex(&["verify"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["result"]["passed"], true);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(
        stderr.lines().filter(|l| l.starts_with("PASS")).count() >= 10,
        "{stderr}"
    );
}

#[test]
fn verify_negative_control_fails() {
    let out = numindex(&[
        "verify",
        "--samples",
        "10",
        "--inject-fault",
        "wrong-exponent",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    let failed: Vec<&Value> = report["result"]["properties"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|p| p["status"] == "fail")
        .collect();
    assert!(failed
        .iter()
        .any(|p| p["name"] == "characterization_condition"));
    assert!(failed.iter().all(|p| p["repro_seed"].is_u64()));
}

#[test]
fn verify_zero_samples_warns() {
    let out = numindex(&["verify", "--samples", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let warnings = report["result"]["warnings"].as_array().unwrap();
    assert!(warnings
        .iter()
        .any(|w| w.as_str().unwrap().contains("0 samples")));
    assert!(String::from_utf8(out.stderr).unwrap().contains("0 samples"));
}

#[test]
fn out_flag_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let id = write(dir.path(), "id.json", r#"{"dim":2,"rows":[[1,0],[0,1]]}"#);
    let path = dir.path().join("nu.json");
    let out = numindex(&[
        "nu",
        "--space",
        PLANE_P2,
        "--op",
        &id,
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(report["config"]["command"], "nu");
}

#[test]
fn thread_cap_must_be_positive() {
    let out = Command::new(env!("CARGO_BIN_EXE_numindex"))
        .args(["verify", "--samples", "0"])
        .env("NUMINDEX_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

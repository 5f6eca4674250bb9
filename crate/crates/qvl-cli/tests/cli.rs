use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn qvl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qvl"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("qvl-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn harmonic_disc_scenario_passes() {
    let out = scratch("disc");
    let st = qvl().arg("run").arg(scenarios().join("harmonic_disc_frequency.json")).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("frequency.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["data"]["expected_n"], 1.0);
    assert_eq!(report["scenario_hash"].as_str().unwrap().len(), 64);
    assert!(report["grid"]["nodes"].as_u64().unwrap() > 0);
    for row in report["data"]["profile"]["rows"].as_array().unwrap() {
        assert!((row["n"].as_f64().unwrap() - 1.0).abs() < 0.02);
    }
    let merged = qvl().args(["report", "--merge"]).arg(&out).output().unwrap();
    assert_eq!(merged.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_slice(&merged.stdout).unwrap();
    assert_eq!(m["reports"].as_array().unwrap().len(), 1);
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn usage_errors_exit_2() {
    let dir = scratch("usage");
    let empty = dir.join("empty.json");
    fs::write(
        &empty,
        r#"{"name": "e", "generator": {"family": {"family": "harmonic", "k": 1}},
            "domain": {"kind": "polar", "inner": 0.0, "outer": 1.0, "nr": 8, "ntheta": 16}, "suites": []}"#,
    )
    .unwrap();
    assert_eq!(qvl().arg("run").arg(&empty).status().unwrap().code(), Some(2));
    assert_eq!(qvl().arg("run").arg(dir.join("missing.json")).status().unwrap().code(), Some(2));
    let st = qvl().args(["generate", "nope", "--params", r#"{"domain": {"kind": "polar", "inner": 0.0, "outer": 1.0, "nr": 8, "ntheta": 16}}"#, "--out"]).arg(dir.join("f.json")).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert_eq!(qvl().arg("frobnicate").status().unwrap().code(), Some(2));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn failing_suite_exits_1_with_manifest() {
    let dir = scratch("fail");
    let sc = dir.join("wrong.json");
    fs::write(
        &sc,
        r#"{"name": "wrong", "generator": {"family": {"family": "harmonic", "k": 2}},
            "domain": {"kind": "polar", "inner": 0.0, "outer": 1.0, "nr": 32, "ntheta": 64},
            "suites": ["frequency"], "params": {"frequency": {"expected_n": 1.0}}}"#,
    )
    .unwrap();
    let out = dir.join("out");
    assert_eq!(qvl().arg("run").arg(&sc).arg("--out").arg(&out).status().unwrap().code(), Some(1));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["pass"], false);
    assert_eq!(m["failures"][0]["assertion"]["name"], "frequency_matches_degree");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn generate_writes_a_field_file() {
    let dir = scratch("gen");
    let f = dir.join("pair.json");
    let st = qvl()
        .args(["generate", "branch_pair", "--params", r#"{"k": 1, "domain": {"kind": "polar", "inner": 0.0, "outer": 1.0, "nr": 8, "ntheta": 16}}"#, "--out"])
        .arg(&f)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let (field, meta) = qvl_core::qfield::QField::read_json(&f).unwrap();
    assert_eq!((field.q(), field.n()), (2, 1));
    assert_eq!(meta["family"], "branch_pair");
    assert_eq!(meta["params"]["k"], 1);
    // the file feeds a scenario
    let sc = dir.join("sc.json");
    fs::write(&sc, format!(r#"{{"name": "f", "generator": {{"file": {:?}}}, "suites": ["frequency"], "params": {{"frequency": {{"expected_n": 0.5}}}}}}"#, f.to_str().unwrap())).unwrap();
    let out = qvl().arg("run").arg(&sc).arg("--out").arg(dir.join("out")).output().unwrap();
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1), "{out:?}");
    assert!(dir.join("out/frequency.json").exists());
    fs::remove_dir_all(&dir).unwrap();
}

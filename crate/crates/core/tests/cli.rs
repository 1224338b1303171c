use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cone-walker"))
}

fn data(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn survival_csv_from_files() {
    let out = bin()
        .args(["exact", "survival", "--model", &data("lazy.json"), "--cone", &data("orthant2.json")])
        .args(["--start", "1,1", "--n", "64"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,value,truncation_loss"));
    assert_eq!(lines.count(), 65);
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("exact survival:"));
}

#[test]
fn missing_model_exits_one_and_names_it() {
    let out = bin()
        .args(["exact", "survival", "--model", "does/not/exist.json", "--cone", &data("orthant2.json")])
        .args(["--start", "1,1", "--n", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("does/not/exist.json"));
}

#[test]
fn forced_verification_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = bin()
        .args(["verify", "survival", "--model", &data("simple1d.json"), "--cone", &data("halfline.json")])
        .args(["--x", "1", "--n-grid", "64,512", "--tolerance", "0", "--out"])
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.contains("[FAIL]"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["pass"], false);
    assert_eq!(v["config"]["args"][1], serde_json::json!([64, 512]));
    assert!(v["config"]["resolved"]["model"]["steps"].is_array());
}

#[test]
fn reports_ignore_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for t in ["1", "4"] {
        let path = dir.path().join(format!("mc{t}.csv"));
        let status = bin()
            .args(["mc", "survival", "--model", "builtin:lazy", "--cone", "builtin:orthant2"])
            .args(["--start", "1,1", "--n", "50", "--samples", "30000", "--seed", "4", "--out"])
            .arg(&path)
            .env("CONE_WALKER_THREADS", t)
            .status()
            .unwrap();
        assert!(status.success());
        reports.push(std::fs::read(path).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn wedge_cone_file_and_reduite() {
    let out = bin()
        .args(["reduite", "eval", "--cone", &data("wedge_3pi4.json"), "--point", "0,2", "--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    // u = r^{4/3} sin(4θ/3) at r = 2, θ = π/2.
    let expect = 2f64.powf(4.0 / 3.0) * (2.0 * std::f64::consts::PI / 3.0).sin();
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let value: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((value - expect).abs() < 1e-12, "{value} vs {expect}");
}

#[test]
fn invalid_epsilon_is_a_usage_error() {
    let out = bin()
        .args(["mc", "max-moment", "--model", "builtin:lazy", "--cone", "builtin:orthant2"])
        .args(["--start", "1,1", "--n", "10", "--epsilon", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

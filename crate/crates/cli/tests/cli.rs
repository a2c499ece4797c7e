use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dflsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dflsim")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dflsim(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn failures_are_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["profile", "--data", "missing.csv"],
        vec!["synth", "--calibration", "nowhere"],
        vec!["train", "--no-such-flag"],
        vec!["report", "--out", "empty"],
    ] {
        let out = dflsim(dir.path(), &args);
        assert!(!out.status.success());
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        let v: Value = serde_json::from_str(err.trim()).unwrap();
        assert!(v["error"]["kind"].is_string() && v["error"]["message"].is_string());
    }
}

#[test]
fn profile_reports_png_discriminance() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--calibration", "appendixA", "--seed", "7", "--out", "d"]);
    ok(dir.path(), &["ingest", "--codebook", "d/codebook.json", "--data", "d/survey.csv", "--out", "i"]);
    assert_eq!(
        std::fs::read(dir.path().join("d/survey.csv")).unwrap(),
        std::fs::read(dir.path().join("i/survey.csv")).unwrap()
    );
    ok(dir.path(), &["profile", "--data", "d/survey.csv", "--out", "p"]);
    let p = json(&dir.path().join("p/profile.json"));
    assert_eq!(p["provenance"]["flags"]["data"], "d/survey.csv");
    let png = p["profile"]["discriminance"].as_array().unwrap().iter().find(|r| r["country"] == "PNG").unwrap().clone();
    let cv = png["cv_dfc"].as_f64().unwrap();
    assert!((cv - 0.46).abs() < 0.02, "{cv}");
    let md = std::fs::read_to_string(dir.path().join("p/profile.md")).unwrap();
    assert!(md.starts_with("<!-- provenance"));
    assert!(md.contains("| PNG | 1587 |"));
}

#[test]
fn equipped_population_has_zero_reach() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--seed", "3", "--out", "d"]);
    ok(dir.path(), &["train", "--data", "d/survey.csv", "--families", "linear", "--folds", "3", "--out", "m"]);
    // rewrite the survey so every record already owns a device
    let text = std::fs::read_to_string(dir.path().join("d/survey.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let col = header.split(',').position(|h| h == "device_ownership").unwrap();
    let mut out = format!("{header}\n");
    for l in lines {
        let mut cells: Vec<&str> = l.split(',').collect();
        cells[col] = "yes";
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(dir.path().join("equipped.csv"), out).unwrap();
    let stdout = ok(
        dir.path(),
        &["simulate", "--data", "equipped.csv", "--model", "m/model.json", "--scenario", "device_access", "--no-clip", "--out", "s"],
    );
    assert!(stdout.contains("reach 0.0%"), "{stdout}");
    let s = json(&dir.path().join("s/simulation.json"));
    assert_eq!(s["results"][0]["reach"], 0.0);
    assert_eq!(s["results"][0]["population_gain_points"], 0.0);
    assert_eq!(s["results"][0]["scenario"]["clip"], false);
}

#[test]
fn scenario_documents_and_lever_scope() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--seed", "4", "--out", "d"]);
    ok(dir.path(), &["train", "--data", "d/survey.csv", "--families", "boosting", "--folds", "2", "--out", "b"]);
    let eval = std::fs::read_to_string(dir.path().join("b/evaluation.md")).unwrap();
    assert!(eval.contains("lever extraction requires the transparent model"));
    assert!(!dir.path().join("b/levers.csv").exists());

    let doc = r#"{"name":"rural budgeting","assignments":{"budget_management":"yes"},"filter":{"area":["Rural"]}}"#;
    std::fs::write(dir.path().join("rural.json"), doc).unwrap();
    ok(dir.path(), &["simulate", "--data", "d/survey.csv", "--model", "b/model.json", "--scenario", "rural.json", "--by", "area", "--out", "s"]);
    let s = json(&dir.path().join("s/simulation.json"));
    let urban = s["results"][0]["subgroups"][0]["rows"].as_array().unwrap().iter().find(|r| r["group"] == "Urban").unwrap().clone();
    assert_eq!(urban["reached"], 0);
    assert_eq!(s["results"][0]["scenario"]["clip"], true);

    let bad = r#"{"name":"x","assignments":{"gender":"Male"}}"#;
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let out = dflsim(dir.path(), &["simulate", "--data", "d/survey.csv", "--model", "b/model.json", "--scenario", "bad.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("segmentation variable"));
}

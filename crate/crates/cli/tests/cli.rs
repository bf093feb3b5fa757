use std::path::Path;
use std::process::{Command, Output};

fn chargehub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chargehub")).args(args).env("CHARGEHUB_LOG", "error").output().expect("binary runs")
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(bytes)))
}

fn synth(dir: &Path, days: &str) -> String {
    let out = chargehub(&["synth", "--seed", "1", "--days", days, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = dir.join("chargehub.toml");
    // Keep the test light: a short test period and a small ensemble.
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text = text.replace("days_per_season = 70", "days_per_season = 3");
    text = text.replace("estimators = 30", "estimators = 10");
    std::fs::write(&cfg, text).unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn validate_reports_missing_files_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[data]\nquarter_hourly = \"nope.csv\"\nhourly = \"nope_h.csv\"\n").unwrap();
    let out = chargehub(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = json(&out.stderr);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("nope.csv"));

    let out = chargehub(&["validate", "--config", "/does/not/exist.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stderr)["error"], "io");
}

#[test]
fn unknown_controller_is_a_usage_error() {
    let out = chargehub(&["simulate", "--config", "x.toml", "--controller", "psychic"]);
    assert!(!out.status.success());
}

#[test]
fn omniscient_simulation_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "30");
    let v = chargehub(&["validate", "--config", &cfg]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
    assert_eq!(json(&v.stdout)["days"], 30);

    let out = chargehub(&["simulate", "--config", &cfg, "--controller", "omniscient", "--days", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out.stdout);
    assert_eq!(summary["controller"], "omniscient");
    assert_eq!(summary["fallbacks"], 0);
    let episodes = dir.path().join("out/episodes");
    let csvs: Vec<_> = std::fs::read_dir(&episodes)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    assert_eq!(csvs.len(), 2);
    for c in &csvs {
        assert_eq!(std::fs::read_to_string(c).unwrap().lines().count(), 97);
    }

    let reports = dir.path().join("reports");
    let out = chargehub(&["report", episodes.to_str().unwrap(), "--out", reports.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out.stdout)["cost_normalized"]["omniscient"]["Overall"], 100.0);
    assert!(reports.join("control_table.csv").is_file());
}

#[test]
fn forecasting_controllers_need_a_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), "20");
    let out = chargehub(&["simulate", "--config", &cfg, "--controller", "deterministic", "--days", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stderr)["error"], "artifact");

    let out = chargehub(&["train", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/models/forecaster.json").is_file());
    let out = chargehub(&["eval-forecasts", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out.stdout)["targets"]["ev"]["nmae"].is_object());
    let out = chargehub(&["simulate", "--config", &cfg, "--controller", "deterministic", "--days", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

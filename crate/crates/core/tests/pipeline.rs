use chargehub::data::{ingest, synth, RunConfig};
use chargehub::mpc::ControllerKind;
use chargehub::pipeline;
use chargehub::Error;

#[test]
fn csv_round_trip_preserves_the_bundle() {
    let b = synth(11, 14).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = b.write_csv(dir.path()).unwrap();
    let back = ingest(&paths).unwrap();
    assert_eq!(back.n_days(), 14);
    assert_eq!(back.calendar, b.calendar);
    for (x, y) in [(&b.ev_power, &back.ev_power), (&b.pv_power, &back.pv_power), (&b.price, &back.price)] {
        assert_eq!(x.len(), y.len());
        for (u, v) in x.values().iter().zip(y.values()) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }
}

#[test]
fn config_files_resolve_relative_paths() {
    let b = synth(12, 20).unwrap();
    let dir = tempfile::tempdir().unwrap();
    b.write_csv(&dir.path().join("data")).unwrap();
    let text = r#"
seed = 3
[data]
quarter_hourly = "data/quarter_hourly.csv"
hourly = "data/hourly.csv"
[evaluation]
days_per_season = 1
controllers = ["omniscient"]
[output]
dir = "results"
"#;
    let path = dir.path().join("run.toml");
    std::fs::write(&path, text).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.output.dir, dir.path().join("results"));
    let p = pipeline::prepare(cfg.clone()).unwrap();
    assert_eq!(p.bundle.n_days(), 20);
    let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);

    let s = pipeline::simulate(&p, ControllerKind::Omniscient, Some(1)).unwrap();
    assert_eq!(s.fallbacks, 0);
    assert!(matches!(pipeline::simulate(&p, ControllerKind::Deterministic, Some(1)), Err(Error::Artifact(_))));
}

#[test]
fn missing_inputs_are_config_errors() {
    let cfg = RunConfig::from_toml("[data]\nquarter_hourly = \"/nonexistent/q.csv\"\nhourly = \"/nonexistent/h.csv\"\n").unwrap();
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    assert!(RunConfig::from_toml("[data]\nsynthetic_days = 20\nbogus = 1\n").is_err());
    assert!(matches!(pipeline::prepare(RunConfig::from_toml("[data]\nsynthetic_days = 9\n").unwrap()), Err(_)));
}

#[test]
fn trained_forecaster_survives_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_toml(
        "[data]\nsynthetic_days = 15\n[forecast]\nestimators = 10\nmax_rounds = 10\n[evaluation]\ntest_start_day = 12\n",
    )
    .unwrap();
    cfg.output.dir = dir.path().to_path_buf();
    let p = pipeline::prepare(cfg).unwrap();
    let (f, path) = pipeline::train(&p).unwrap();
    let g = pipeline::load_forecaster(&p.config).unwrap();
    assert_eq!(path, pipeline::forecaster_path(&p.config));
    let a = f.forecast(&p.bundle, 12 * 96 + 5).unwrap();
    let b = g.forecast(&p.bundle, 12 * 96 + 5).unwrap();
    assert_eq!((a.ev, a.pv, a.price), (b.ev, b.pv, b.price));
}

#[test]
fn documented_config_parses() {
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config.md")).unwrap();
    let block = doc.split("```toml").nth(1).and_then(|s| s.split("```").next()).expect("toml block");
    let cfg = RunConfig::from_toml(block).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg, RunConfig::from_toml("[data]\nsynthetic_days = 120\nsynthetic_start = \"2021-01-01\"\n").unwrap());
}

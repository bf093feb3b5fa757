mod common;

use chargehub::exec::Execution;
use chargehub::hub::BatteryParams;
use chargehub::mpc::{ControllerKind, MpcConfig};
use chargehub::sim::{run_days, run_episode, EpisodeResult, SimContext};
use chargehub::solver::SolverSettings;
use chargehub::timeseries::{TimeSeries, Unit, STEP_HOURS};

fn ctx<'a>(
    b: &'a chargehub::data::DatasetBundle,
    f: Option<&'a chargehub::forecast::forecaster::HubForecaster>,
    p: &'a BatteryParams,
) -> SimContext<'a> {
    SimContext { bundle: b, forecaster: f, params: p, mpc: MpcConfig::default(), solver: SolverSettings { tol: 1e-9, ..Default::default() } }
}

/// Everything except wall-clock fields.
fn physical(r: &EpisodeResult) -> Vec<[f64; 6]> {
    r.steps.iter().map(|s| [s.p_b_requested, s.p_b, s.p_ib, s.e_b, s.p_g, s.cost]).collect()
}

#[test]
fn omniscient_realizes_its_first_plan() {
    let b = chargehub::data::synth(3, 16).unwrap();
    let p = BatteryParams::default();
    let r = run_episode(ControllerKind::Omniscient, 10, &ctx(&b, None, &p), None).unwrap();
    assert_eq!(r.steps.len(), 96);
    assert_eq!(r.fallbacks(), 0);
    assert_eq!(r.clamps(), 0);
    let planned = r.steps[0].planned_objective;
    let realized = r.total_cost();
    assert!((planned - realized).abs() <= 1e-5 * (1.0 + planned.abs()), "planned {planned}, realized {realized}");
    assert!((r.steps[95].e_b - p.e_init).abs() < 1e-5);
}

#[test]
fn energy_trajectory_telescopes() {
    let b = chargehub::data::synth(4, 16).unwrap();
    let p = BatteryParams::default();
    let r = run_episode(ControllerKind::Omniscient, 9, &ctx(&b, None, &p), None).unwrap();
    let mut e = p.e_init;
    for s in &r.steps {
        assert_eq!(s.e_b_before, e);
        assert!(s.clamp.is_none());
        assert_eq!(s.e_b, e - STEP_HOURS * s.p_ib);
        assert!(s.e_b >= p.e_min && s.e_b <= p.e_max);
        e = s.e_b;
    }
    let drift: f64 = r.steps.iter().map(|s| STEP_HOURS * s.p_ib).sum();
    assert!((p.e_init - drift - r.steps[95].e_b).abs() < 1e-9);
}

#[test]
fn zero_price_day_costs_nothing() {
    let mut b = chargehub::data::synth(5, 16).unwrap();
    b.price = TimeSeries::hourly(vec![0.0; b.price.len()], Unit::EurPerMwh).unwrap();
    let p = BatteryParams::default();
    let r = run_episode(ControllerKind::Omniscient, 8, &ctx(&b, None, &p), None).unwrap();
    assert_eq!(r.total_cost(), 0.0);
    assert!(r.steps.iter().all(|s| s.p_b.is_finite()));
}

#[test]
fn zero_width_stochastic_equals_deterministic() {
    let (b, f) = common::trained(6, 16, 13);
    let f0 = f.with_zero_width().unwrap();
    let p = BatteryParams::default();
    let c = ctx(&b, Some(&f0), &p);
    let rs = run_days(&[ControllerKind::Deterministic, ControllerKind::Stochastic], &[13], &c, Execution::Sequential).unwrap();
    assert_eq!(rs.len(), 2);
    assert!(rs[1].steps.iter().all(|s| s.n_scenarios == 1));
    assert_eq!(physical(&rs[0]), physical(&rs[1]));
    assert_eq!(rs[0].total_cost().to_bits(), rs[1].total_cost().to_bits());
}

#[test]
fn runs_are_deterministic_and_execution_independent() {
    let (b, f) = common::trained(7, 17, 13);
    let p = BatteryParams::default();
    let c = ctx(&b, Some(&f), &p);
    let kinds = [ControllerKind::Omniscient, ControllerKind::Deterministic];
    let a = run_days(&kinds, &[13, 14], &c, Execution::Sequential).unwrap();
    let z = run_days(&kinds, &[13, 14], &c, Execution::Parallel).unwrap();
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&z) {
        assert_eq!((x.controller, x.day), (y.controller, y.day));
        assert_eq!(physical(x), physical(y));
    }
    assert!(a.iter().all(|r| r.fallbacks() == 0));
    assert!(a[1].steps.iter().all(|s| s.forecast_seconds > 0.0));
    assert!(a[0].steps.iter().all(|s| s.forecast_seconds == 0.0));
}

#[test]
fn days_without_a_following_day_are_rejected() {
    let b = chargehub::data::synth(8, 14).unwrap();
    let p = BatteryParams::default();
    assert!(run_episode(ControllerKind::Omniscient, 13, &ctx(&b, None, &p), None).is_err());
    assert!(run_episode(ControllerKind::Deterministic, 10, &ctx(&b, None, &p), None).is_err());
}

#[test]
fn episode_files_round_trip() {
    let b = chargehub::data::synth(9, 14).unwrap();
    let p = BatteryParams::default();
    let r = run_episode(ControllerKind::Omniscient, 11, &ctx(&b, None, &p), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = r.write(dir.path()).unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 97);
    let rep: chargehub::sim::EpisodeReport = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(rep.summary.controller, ControllerKind::Omniscient);
    assert!((rep.summary.cost - r.total_cost()).abs() < 1e-12);
}

//! Sequential versus rayon execution of the data-parallel hot spots:
//! ensemble fitting, a day of forecasts and a batch of closed-loop episodes.

use chargehub::data::synth;
use chargehub::exec::Execution;
use chargehub::forecast::enbpi::EnbpiParams;
use chargehub::forecast::forecaster::{training_rows, HubForecaster, Target, TrainSplit};
use chargehub::forecast::gbt::GbtParams;
use chargehub::forecast::solar::Site;
use chargehub::hub::BatteryParams;
use chargehub::mpc::{ControllerKind, MpcConfig};
use chargehub::sim::{run_days, SimContext};
use chargehub::solver::SolverSettings;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn params() -> EnbpiParams {
    EnbpiParams { estimators: 10, gbt: GbtParams { max_rounds: 40, ..GbtParams::default() }, ..EnbpiParams::default() }
}

fn bench(c: &mut Criterion) {
    let b = synth(1, 24).unwrap();
    let site = Site::default();
    let split = TrainSplit::chronological(0..20, [0.7, 0.15, 0.15]).unwrap();
    let (x, y) = training_rows(&b, &site, Target::Pv, split.train.clone()).unwrap();

    let mut g = c.benchmark_group("enbpi_fit");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bch, &exec| {
            bch.iter(|| chargehub::forecast::enbpi::fit_enbpi(&x, &y, None, None, &params(), exec).unwrap())
        });
    }
    g.finish();

    let f = HubForecaster::train(&b, &site, &split, &params(), Execution::Parallel).unwrap();
    let mut g = c.benchmark_group("forecast_day");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bch, &exec| {
            bch.iter(|| f.forecast_day(&b, 21, exec).unwrap())
        });
    }
    g.finish();

    let battery = BatteryParams::default();
    let ctx = SimContext {
        bundle: &b,
        forecaster: None,
        params: &battery,
        mpc: MpcConfig::default(),
        solver: SolverSettings { tol: 1e-9, ..SolverSettings::default() },
    };
    let mut g = c.benchmark_group("omniscient_episodes");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bch, &exec| {
            bch.iter(|| run_days(&[ControllerKind::Omniscient], &[20, 21, 22], &ctx, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);

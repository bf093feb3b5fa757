mod common;

use chargehub::forecast::scenario::{Branch, ScenarioTree};
use chargehub::hub::{BatteryParams, BatteryState, Spline};
use chargehub::mpc::{plan, ControllerKind, MpcConfig};
use chargehub::solver::SolverSettings;
use common::{random_two_step, TwoStep, DT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 0.01;

fn settings() -> SolverSettings {
    SolverSettings { tol: 1e-9, ..SolverSettings::default() }
}

fn solve(inst: &TwoStep, config: &MpcConfig) -> f64 {
    let p = plan(
        ControllerKind::Deterministic,
        &inst.tree(),
        BatteryState { e_b: inst.e0 },
        0,
        &inst.params,
        config,
        &settings(),
    )
    .unwrap();
    assert!(!p.is_fallback(), "{}", p.detail);
    p.objective
}

#[test]
fn random_instances_match_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n in 0..12 {
        let inst = random_two_step(&mut rng);
        let mpc = solve(&inst, &MpcConfig::default());
        let grid = inst.grid_min(H);
        let bound = inst.resolution_bound(H);
        assert!(mpc <= grid + 1e-7, "instance {n}: mpc {mpc} above grid {grid}");
        assert!(grid - mpc <= bound, "instance {n}: grid {grid} - mpc {mpc} exceeds {bound}");
    }
}

/// Idle hub, round trip forced by the terminal condition. Trading `q` kW
/// out and back earns `hi (q - q^2/c0) - lo (q + q^2/c1)`, so any positive
/// spread pays and the best trade is `(hi - lo) / (2 (hi/c0 + lo/c1))`.
#[test]
fn round_trip_trades_only_on_a_spread() {
    let mut params = BatteryParams::new(10.0, 40.0, 25.0, vec![Spline { a: 0.0, b: 40.0 }]).unwrap();
    params.p_ib_bound = 20.0;
    let config = MpcConfig { episode_steps: 2 };
    for (hi, lo) in [(0.03, 0.03), (0.04, 0.02), (0.05, 0.01)] {
        let tree = ScenarioTree::new(
            vec![Branch { ev: vec![0.0; 2], pv: vec![0.0; 2], buy: vec![hi, lo], sell: vec![hi, lo] }],
            vec![1.0],
        )
        .unwrap();
        let p = plan(ControllerKind::Deterministic, &tree, BatteryState { e_b: 25.0 }, 0, &params, &config, &settings()).unwrap();
        let profit = |q: f64| hi * (q - q * q / 40.0) - lo * (q + q * q / 40.0);
        let grid_q = (-2000..=2000)
            .map(|i| i as f64 * H)
            .max_by(|a, b| profit(*a).total_cmp(&profit(*b)))
            .unwrap();
        let closed = (hi - lo) / (2.0 * (hi / 40.0 + lo / 40.0));
        assert!((grid_q - closed).abs() <= H);
        assert!((p.committed_p_ib - closed).abs() < 1e-3, "{hi}/{lo}: {} vs {closed}", p.committed_p_ib);
        assert!((p.objective + profit(grid_q)).abs() <= 1e-6 + H * (hi + lo));
        if hi == lo {
            assert!(p.committed_p_ib.abs() < 1e-4);
        } else {
            assert!(p.p_ib[0][1] < 0.0, "the battery recharges in the cheap step");
            assert!((p.e_b[0][1] - 25.0).abs() < 1e-6);
            assert!((p.e_b[0][0] - (25.0 - DT * closed)).abs() < 1e-4);
        }
    }
}

use chargehub::hub::{
    cone_row, exact_grid_cost, exact_internal_power, external_power, power_balance_residual, BatteryParams, PricePair,
};
use chargehub::sim::{apply, Observation, PlantState};
use chargehub::timeseries::{Episode, STEP_HOURS};
use proptest::prelude::*;

fn obs(p_ev: f64, p_pv: f64, price: f64) -> Observation {
    Observation { p_ev, p_pv, prices: PricePair::symmetric(price), carbon_intensity: 300.0 }
}

fn state(e: f64) -> PlantState {
    let mut s = PlantState::start(Episode::new(0), &BatteryParams::default());
    s.battery.e_b = e;
    s
}

proptest! {
    #[test]
    fn internal_power_inverts_external_power(cap in 1.0f64..200.0, frac in -3.0f64..0.5) {
        let q = frac * cap;
        let back = exact_internal_power(external_power(q, cap), cap).unwrap();
        prop_assert!((back - q).abs() <= 1e-9 * (1.0 + q.abs()), "{q} -> {back}");
        prop_assert!(cone_row(q, external_power(q, cap), cap).abs() <= 1e-9 * (1.0 + cap + q.abs()));
    }

    #[test]
    fn battery_loses_energy_both_ways(cap in 1.0f64..200.0, p_b in -100.0f64..50.0) {
        prop_assume!(p_b <= cap / 4.0);
        let q = exact_internal_power(p_b, cap).unwrap();
        prop_assert!(q >= p_b - 1e-12);
    }

    #[test]
    fn apply_keeps_the_box_and_balances_power(
        e in 10.0f64..90.0,
        request in -400.0f64..400.0,
        p_ev in 0.0f64..100.0,
        p_pv in 0.0f64..60.0,
        price in -0.01f64..0.05,
    ) {
        let params = BatteryParams::default();
        let (next, r) = apply(state(e), request, &obs(p_ev, p_pv, price), &params).unwrap();
        prop_assert!(next.battery.e_b >= params.e_min && next.battery.e_b <= params.e_max);
        prop_assert_eq!(next.step_in_episode, 1);
        prop_assert!(power_balance_residual(p_ev, r.p_g, p_pv, r.p_b).abs() <= 1e-9 * (1.0 + p_ev + p_pv + r.p_b.abs()));
        prop_assert_eq!(r.cost, exact_grid_cost(r.p_g, PricePair::symmetric(price)));
        prop_assert!((r.e_b - (e - STEP_HOURS * r.p_ib)).abs() <= 1e-9);
        if r.clamp.is_none() {
            prop_assert_eq!(r.p_b, request);
        } else {
            prop_assert!(r.p_b.abs() <= request.abs() + 1e-9);
        }
    }

    #[test]
    fn feasible_requests_pass_unchanged(e in 20.0f64..80.0, frac in -0.2f64..0.2) {
        let params = BatteryParams::default();
        let cap = chargehub::hub::short_circuit_cap(e, &params).unwrap();
        let request = frac * cap;
        let (_, r) = apply(state(e), request, &obs(10.0, 0.0, 0.02), &params).unwrap();
        prop_assert!(r.clamp.is_none(), "{:?}", r.clamp);
        prop_assert_eq!(r.p_b, request);
    }
}

#![allow(dead_code)]

use chargehub::data::{synth, DatasetBundle};
use chargehub::exec::Execution;
use chargehub::forecast::enbpi::EnbpiParams;
use chargehub::forecast::forecaster::{HubForecaster, TrainSplit};
use chargehub::forecast::gbt::GbtParams;
use chargehub::forecast::scenario::{Branch, ScenarioTree};
use chargehub::forecast::solar::Site;
use chargehub::hub::{BatteryParams, Spline};
use rand::Rng;

pub const DT: f64 = 0.25;

/// A two-step, single-branch planning instance.
#[derive(Debug, Clone)]
pub struct TwoStep {
    pub params: BatteryParams,
    pub e0: f64,
    pub ev: [f64; 2],
    pub pv: [f64; 2],
    pub buy: [f64; 2],
    pub sell: [f64; 2],
}

impl TwoStep {
    pub fn tree(&self) -> ScenarioTree {
        let b = Branch { ev: self.ev.to_vec(), pv: self.pv.to_vec(), buy: self.buy.to_vec(), sell: self.sell.to_vec() };
        ScenarioTree::new(vec![b], vec![1.0]).unwrap()
    }

    fn cap(&self, e: f64) -> f64 {
        self.params.splines.iter().map(|s| s.a * e + s.b).fold(f64::INFINITY, f64::min)
    }

    fn cap_min(&self) -> f64 {
        self.cap(self.params.e_min).min(self.cap(self.params.e_max))
    }

    /// Cost of internal powers `q` when the battery delivers the most
    /// external power each `q` allows. `None` if the energy box is left.
    pub fn cost(&self, q: [f64; 2]) -> Option<f64> {
        let p = &self.params;
        let mut e = self.e0;
        let mut total = 0.0;
        for i in 0..2 {
            let cap = self.cap(e);
            let e_next = e - DT * q[i];
            if e_next < p.e_min - 1e-12 || e_next > p.e_max + 1e-12 {
                return None;
            }
            let p_b = q[i] - q[i] * q[i] / cap;
            let p_g = self.ev[i] - self.pv[i] - p_b;
            total += (self.buy[i] * p_g).max(self.sell[i] * p_g);
            e = e_next;
        }
        Some(total)
    }

    /// Exhaustive search over both internal powers at resolution `h`.
    pub fn grid_min(&self, h: f64) -> f64 {
        let bound = self.params.p_ib_bound;
        let n = (bound / h).floor() as i64;
        let mut best = f64::INFINITY;
        for i in -n..=n {
            for j in -n..=n {
                if let Some(c) = self.cost([i as f64 * h, j as f64 * h]) {
                    best = best.min(c);
                }
            }
        }
        best
    }

    /// How far the grid minimum can sit above the true minimum: a Lipschitz
    /// constant of the cost in each coordinate times the cell size.
    pub fn resolution_bound(&self, h: f64) -> f64 {
        let b = self.params.p_ib_bound;
        let cm = self.cap_min();
        let a_max = self.params.splines.iter().map(|s| s.a.abs()).fold(0.0, f64::max);
        let price = self.buy.iter().chain(&self.sell).fold(0.0f64, |m, &v| m.max(v.abs()));
        let own = 1.0 + 2.0 * b / cm;
        let coupling = b * b * a_max * DT / (cm * cm);
        h * price * (2.0 * own + coupling)
    }
}

pub fn random_two_step<R: Rng>(rng: &mut R) -> TwoStep {
    let splines = if rng.random_bool(0.5) {
        vec![Spline { a: rng.random_range(0.2..1.5), b: rng.random_range(10.0..40.0) }]
    } else {
        vec![
            Spline { a: rng.random_range(0.8..1.5), b: rng.random_range(5.0..20.0) },
            Spline { a: rng.random_range(0.1..0.5), b: rng.random_range(20.0..40.0) },
        ]
    };
    let mut params = BatteryParams::new(10.0, 12.0, 11.0, splines).unwrap();
    params.p_ib_bound = rng.random_range(2.0..4.0);
    let buy = [rng.random_range(0.005..0.05), rng.random_range(0.005..0.05)];
    let sell = [buy[0] * rng.random_range(0.3..1.0), buy[1] * rng.random_range(0.3..1.0)];
    TwoStep {
        e0: rng.random_range(10.0..12.0),
        ev: [rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)],
        pv: [rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)],
        buy,
        sell,
        params,
    }
}

pub fn quick_enbpi(seed: u64) -> EnbpiParams {
    EnbpiParams {
        estimators: 10,
        seed,
        gbt: GbtParams { max_rounds: 40, ..GbtParams::default() },
        ..EnbpiParams::default()
    }
}

/// Synthetic bundle plus a forecaster trained on days `1..train_days`.
pub fn trained(seed: u64, days: usize, train_days: usize) -> (DatasetBundle, HubForecaster) {
    let b = synth(seed, days).unwrap();
    let split = TrainSplit::chronological(0..train_days, [0.7, 0.15, 0.15]).unwrap();
    let f = HubForecaster::train(&b, &Site::default(), &split, &quick_enbpi(seed), Execution::Parallel).unwrap();
    (b, f)
}

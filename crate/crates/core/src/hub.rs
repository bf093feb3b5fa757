//! Physical and economic model of the charging hub.
//!
//! Sign convention: positive battery power (`p_b`, `p_ib`) discharges the
//! battery into the hub, so positive internal power drains stored energy.
//! Both the exact plant relations and the convex forms used by the
//! controller live here.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::timeseries::{Resolution, TimeSeries, Unit, STEP_HOURS};

/// One affine piece `a * e_b + b` of the short-circuit power envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spline {
    /// Slope in 1/h.
    pub a: f64,
    /// Intercept in kW.
    pub b: f64,
}

impl Spline {
    pub fn eval(&self, e_b: f64) -> f64 {
        self.a * e_b + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub e_min: f64,
    pub e_max: f64,
    pub e_init: f64,
    pub splines: Vec<Spline>,
    /// Symmetric bound on internal power, kW.
    pub p_ib_bound: f64,
}

impl Default for BatteryParams {
    /// 10/90 kWh limits, 25 kWh start and a two-piece envelope. No measured
    /// spline fit is available, so the envelope is synthetic.
    fn default() -> Self {
        let splines = vec![Spline { a: 1.5, b: 25.0 }, Spline { a: 0.5, b: 80.0 }];
        let mut params = BatteryParams { e_min: 10.0, e_max: 90.0, e_init: 25.0, splines, p_ib_bound: 0.0 };
        params.p_ib_bound = params.peak_short_circuit_cap();
        params
    }
}

impl BatteryParams {
    /// Builds parameters with `p_ib_bound` defaulted to the peak envelope.
    pub fn new(e_min: f64, e_max: f64, e_init: f64, splines: Vec<Spline>) -> Result<Self> {
        let mut params = BatteryParams { e_min, e_max, e_init, splines, p_ib_bound: 0.0 };
        if params.splines.is_empty() {
            return Err(contract("battery needs at least one spline"));
        }
        params.p_ib_bound = params.peak_short_circuit_cap();
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_min < self.e_init && self.e_init < self.e_max) {
            return Err(contract(format!(
                "need e_min < e_init < e_max, got {} / {} / {}",
                self.e_min, self.e_init, self.e_max
            )));
        }
        if self.splines.is_empty() {
            return Err(contract("battery needs at least one spline"));
        }
        // The envelope is concave, so its minimum over the box sits at an end.
        for e in [self.e_min, self.e_max] {
            if self.envelope(e) <= 0.0 {
                return Err(contract(format!("short-circuit envelope not positive at {e} kWh")));
            }
        }
        if !(self.p_ib_bound > 0.0) {
            return Err(contract("p_ib_bound must be positive"));
        }
        Ok(())
    }

    fn envelope(&self, e_b: f64) -> f64 {
        self.splines.iter().map(|s| s.eval(e_b)).fold(f64::INFINITY, f64::min)
    }

    /// Maximum of the envelope over `[e_min, e_max]`.
    pub fn peak_short_circuit_cap(&self) -> f64 {
        let mut candidates = vec![self.e_min, self.e_max];
        for (i, s) in self.splines.iter().enumerate() {
            for t in &self.splines[i + 1..] {
                if s.a != t.a {
                    let e = (t.b - s.b) / (s.a - t.a);
                    if e > self.e_min && e < self.e_max {
                        candidates.push(e);
                    }
                }
            }
        }
        candidates.into_iter().map(|e| self.envelope(e)).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    /// Stored energy, kWh.
    pub e_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    pub arrival_step: usize,
    pub departure_step: usize,
    pub energy_kwh: f64,
}

impl EvSession {
    pub fn new(arrival_step: usize, departure_step: usize, energy_kwh: f64) -> Result<Self> {
        let s = EvSession { arrival_step, departure_step, energy_kwh };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.departure_step <= self.arrival_step {
            return Err(contract(format!(
                "session departs at {} before arriving at {}",
                self.departure_step, self.arrival_step
            )));
        }
        if !(self.energy_kwh >= 0.0) {
            return Err(contract("session energy must be non-negative"));
        }
        Ok(())
    }

    /// Steps with the charging indicator set: the closed interval
    /// `[arrival, departure]`.
    pub fn charging_steps(&self) -> std::ops::RangeInclusive<usize> {
        self.arrival_step..=self.departure_step
    }
}

/// Buy and sell price for one step, EUR per kW held over the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePair {
    pub buy: f64,
    pub sell: f64,
}

impl PricePair {
    pub fn symmetric(price: f64) -> Self {
        PricePair { buy: price, sell: price }
    }
}

/// Average charging power `E_c / (dT * (k_f - k_0))`.
pub fn session_avg_power(s: &EvSession) -> Result<f64> {
    s.validate()?;
    Ok(s.energy_kwh / (STEP_HOURS * (s.departure_step - s.arrival_step) as f64))
}

/// Aggregate EV demand over `steps`. Each session contributes its average
/// power on every step of its closed charging interval, so a session spans
/// one step more than the average-power denominator assumes.
pub fn aggregate_ev_demand(sessions: &[EvSession], steps: Range<usize>) -> Result<TimeSeries> {
    let mut values = vec![0.0; steps.len()];
    for s in sessions {
        let p = session_avg_power(s)?;
        let lo = s.arrival_step.max(steps.start);
        let hi = (s.departure_step + 1).min(steps.end);
        for k in lo..hi {
            values[k - steps.start] += p;
        }
    }
    TimeSeries::new(steps.start, values, Unit::Kw, Resolution::QuarterHour)
}

/// Tightest short-circuit power bound `min_m (a_m e_b + b_m)`.
pub fn short_circuit_cap(e_b: f64, params: &BatteryParams) -> Result<f64> {
    const SLACK: f64 = 1e-9;
    if e_b < params.e_min - SLACK || e_b > params.e_max + SLACK {
        return Err(contract(format!(
            "energy {e_b} kWh outside [{}, {}]",
            params.e_min, params.e_max
        )));
    }
    Ok(params.envelope(e_b))
}

/// Internal power solving `p_ib = p_b + p_ib^2 / p_sc` on the low-loss
/// branch. Uses the cancellation-free form `2 p_b / (1 + sqrt(1 - 4 p_b / p_sc))`.
pub fn exact_internal_power(p_b: f64, p_sc: f64) -> Result<f64> {
    if !(p_sc > 0.0) {
        return Err(contract(format!("short-circuit power must be positive, got {p_sc}")));
    }
    let limit = p_sc / 4.0;
    if p_b > limit {
        return Err(Error::InfeasiblePower { p_b, limit });
    }
    let disc = (1.0 - 4.0 * p_b / p_sc).max(0.0);
    Ok(2.0 * p_b / (1.0 + disc.sqrt()))
}

/// External power delivered for a given internal power, `p_ib - p_ib^2/p_sc`.
pub fn external_power(p_ib: f64, p_sc: f64) -> f64 {
    p_ib - p_ib * p_ib / p_sc
}

/// `(p_ib - p_b + p_sc) - ||(2 p_ib, p_ib - p_b - p_sc)||`. Non-negative iff
/// the cone constraint holds; zero on the exact loss manifold.
pub fn cone_row(p_ib: f64, p_b: f64, p_sc: f64) -> f64 {
    (p_ib - p_b + p_sc) - (2.0 * p_ib).hypot(p_ib - p_b - p_sc)
}

/// `e_b - dT * p_ib`. Limits are the plant's concern.
pub fn step_battery(state: BatteryState, p_ib: f64) -> BatteryState {
    BatteryState { e_b: state.e_b - STEP_HOURS * p_ib }
}

pub fn exact_grid_cost(p_g: f64, prices: PricePair) -> f64 {
    if p_g >= 0.0 {
        prices.buy * p_g
    } else {
        prices.sell * p_g
    }
}

/// The two lower bounds of the cost epigraph `(buy * p_g, sell * p_g)`.
pub fn cost_epigraph_bounds(p_g: f64, prices: PricePair) -> (f64, f64) {
    (prices.buy * p_g, prices.sell * p_g)
}

pub fn power_balance_residual(p_ev: f64, p_g: f64, p_pv: f64, p_b: f64) -> f64 {
    p_ev - p_g - p_pv - p_b
}

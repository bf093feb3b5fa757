//! Deterministic synthetic datasets.
//!
//! Shapes: clear-sky PV modulated by a daily cloudiness level and an AR(1)
//! cloud process; Poisson EV arrivals with morning and evening commuter
//! peaks; hourly prices driven by residual national demand (load minus
//! solar and wind) plus noise and upward spikes, floored to stay strictly
//! positive. PV and aggregate EV power are rescaled to 70 kW and 160 kW
//! peaks.

use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::DatasetBundle;
use crate::error::{contract, Result};
use crate::forecast::solar::{solar_zenith, Site};
use crate::hub::{aggregate_ev_demand, EvSession};
use crate::timeseries::{Calendar, TimeSeries, Unit, STEPS_PER_DAY, STEPS_PER_HOUR, STEP_HOURS};

pub const PV_PEAK_KW: f64 = 70.0;
pub const EV_PEAK_KW: f64 = 160.0;
pub const MIN_DAYS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub start: NaiveDate,
    pub site: Site,
    /// Lower bound on hourly prices, EUR/MWh.
    pub price_floor: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            start: NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
            site: Site::default(),
            price_floor: 25.0,
        }
    }
}

pub fn synth(seed: u64, days: usize) -> Result<DatasetBundle> {
    synth_with(seed, days, &SynthOptions::default())
}

fn bump(x: f64, centre: f64, width: f64) -> f64 {
    (-0.5 * ((x - centre) / width).powi(2)).exp()
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("positive standard deviation")
}

pub fn synth_with(seed: u64, days: usize, opts: &SynthOptions) -> Result<DatasetBundle> {
    if days < MIN_DAYS {
        return Err(contract(format!("synthetic data needs at least {MIN_DAYS} days, got {days}")));
    }
    let calendar = Calendar::from_date(opts.start);
    let n = days * STEPS_PER_DAY;
    let n_hours = n / STEPS_PER_HOUR;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit_noise = normal(0.0, 1.0);

    // Weather and PV.
    let cos_zenith: Vec<f64> = (0..n)
        .map(|k| solar_zenith(&opts.site, calendar.datetime(k)).to_radians().cos().max(0.0))
        .collect();
    let mut direct = Vec::with_capacity(n);
    let mut diffuse = Vec::with_capacity(n);
    let mut temperature = Vec::with_capacity(n);
    let mut wind = Vec::with_capacity(n);
    let mut pv = Vec::with_capacity(n);
    let mut cloud = 0.0;
    let mut wind_state = 3.0;
    let mut day_clear = 0.0;
    for (k, &cz) in cos_zenith.iter().enumerate() {
        let t = calendar.datetime(k);
        let doy = t.ordinal0() as f64;
        let summer = -(2.0 * PI * (doy - 15.0) / 365.0).cos();
        if k % STEPS_PER_DAY == 0 {
            day_clear = (0.65 + 0.2 * summer + 0.25 * rng.sample(unit_noise)).clamp(0.15, 1.0);
        }
        cloud = 0.92 * cloud + 0.06 * rng.sample(unit_noise);
        let clear = (day_clear + cloud).clamp(0.05, 1.0);
        let hour = calendar.clock_hour(k);
        let temp = 14.0 + 8.0 * summer + 5.0 * (2.0 * PI * (hour - 9.0) / 24.0).sin() + rng.sample(unit_noise);
        wind_state = (0.97 * wind_state + 0.03 * 3.5 + 0.25 * rng.sample(unit_noise)).max(0.0);
        let dir = 950.0 * cz.powf(1.15) * clear;
        let dif = 130.0 * cz.powf(0.8) * (1.3 - clear);
        let raw = if cz > 0.0 {
            ((0.9 * dir + dif) * (1.0 - 0.004 * (temp - 25.0)) * (1.0 + 0.03 * rng.sample(unit_noise))).max(0.0)
        } else {
            0.0
        };
        direct.push(dir);
        diffuse.push(dif);
        temperature.push(temp);
        wind.push(wind_state);
        pv.push(raw);
    }
    let pv_max = pv.iter().copied().fold(0.0, f64::max);
    if pv_max > 0.0 {
        pv.iter_mut().for_each(|v| *v *= PV_PEAK_KW / pv_max);
    }

    // EV sessions.
    let mut sessions = Vec::new();
    for k in 0..n {
        let hour = calendar.clock_hour(k);
        let weekend = calendar.weekday(k) >= 5;
        let shape = 0.55 * bump(hour, 8.0, 1.2) + 0.45 * bump(hour, 17.5, 1.5) + 0.04;
        let rate = shape * if weekend { 0.5 } else { 1.0 };
        let arrivals = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
        for _ in 0..arrivals {
            let long_stay = hour < 11.0 && !weekend;
            let duration = if long_stay { rng.random_range(16..=40) } else { rng.random_range(4..=16) };
            let max_energy = 11.0 * STEP_HOURS * duration as f64;
            let energy = rng.random_range(5.0..35.0f64).min(max_energy);
            sessions.push(EvSession::new(k, k + duration, energy)?);
        }
    }
    let ev_raw = aggregate_ev_demand(&sessions, 0..n)?;
    let ev_max = ev_raw.values().iter().copied().fold(0.0, f64::max);
    if ev_max > 0.0 {
        let f = EV_PEAK_KW / ev_max;
        sessions.iter_mut().for_each(|s| s.energy_kwh *= f);
    }
    let ev_power = aggregate_ev_demand(&sessions, 0..n)?;

    // National demand, renewable generation, prices.
    let mut load = Vec::with_capacity(n_hours);
    let mut gen = Vec::with_capacity(n_hours);
    let mut price = Vec::with_capacity(n_hours);
    let mut load_state = 0.0;
    let mut wind_gen = 8000.0;
    let mut price_state = 0.0;
    let spike = Exp::new(1.0 / 60.0).expect("positive rate");
    for h in 0..n_hours {
        let k = h * STEPS_PER_HOUR;
        let t = calendar.datetime(k);
        let hour = (h % 24) as f64;
        let winter = (2.0 * PI * (t.ordinal0() as f64 - 15.0) / 365.0).cos();
        let weekday = if calendar.weekday(k) >= 5 { 0.8 } else { 1.0 };
        load_state = 0.9 * load_state + 600.0 * rng.sample(unit_noise);
        let l = 45000.0
            + 9000.0 * weekday * (bump(hour, 11.0, 3.0) + 0.8 * bump(hour, 19.0, 2.0))
            + 5000.0 * winter
            + load_state;
        let sun = (0..STEPS_PER_HOUR).map(|q| cos_zenith[k + q]).sum::<f64>() / STEPS_PER_HOUR as f64;
        wind_gen = (0.95 * wind_gen + 0.05 * 8000.0 + 900.0 * rng.sample(unit_noise)).max(0.0);
        let g = 16000.0 * sun + wind_gen;
        price_state = 0.8 * price_state + 5.0 * rng.sample(unit_noise);
        let mut p = 60.0 + 0.004 * (l - g - 30000.0) + price_state;
        if rng.random::<f64>() < 0.01 {
            p += spike.sample(&mut rng);
        }
        load.push(l);
        gen.push(g);
        price.push(p.max(opts.price_floor));
    }

    let ci: Vec<f64> = (0..n)
        .map(|k| {
            let h = k / STEPS_PER_HOUR;
            (150.0 + 0.006 * (load[h] - gen[h]) + 10.0 * rng.sample(unit_noise)).max(50.0)
        })
        .collect();

    let bundle = DatasetBundle {
        calendar,
        ev_power,
        ev_sessions: Some(sessions),
        pv_power: TimeSeries::quarter_hourly(pv, Unit::Kw)?,
        direct_radiation: TimeSeries::quarter_hourly(direct, Unit::WattsPerM2)?,
        diffuse_radiation: TimeSeries::quarter_hourly(diffuse, Unit::WattsPerM2)?,
        temperature: TimeSeries::quarter_hourly(temperature, Unit::Celsius)?,
        wind_speed: TimeSeries::quarter_hourly(wind, Unit::MetersPerSecond)?,
        carbon_intensity: TimeSeries::quarter_hourly(ci, Unit::GramsPerKwh)?,
        price: TimeSeries::hourly(price, Unit::EurPerMwh)?,
        load_forecast: TimeSeries::hourly(load, Unit::Mw)?,
        gen_forecast: TimeSeries::hourly(gen, Unit::Mw)?,
    };
    bundle.validate()?;
    Ok(bundle)
}

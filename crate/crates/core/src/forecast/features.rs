//! Feature recipes for the three forecast targets.
//!
//! A forecast issued at quarter step `k` may only read observations at
//! steps `< k` (hours `< k / 4` for hourly series). Recipes read through the
//! [`Observed`] trait; [`History`] enforces the cutoff so any leak surfaces
//! as an error instead of a silently optimistic forecast.
//!
//! Daily lag features take an explicit `lag_day`: the lagged day is
//! `lag_day - 1`. Training rows use the day of the target step; a forecast
//! issued at `k` uses the day of `k` for its whole window, so steps on the
//! following day see a two-day lag.

use std::ops::Range;

use super::solar::{solar_position, Site};
use crate::data::DatasetBundle;
use crate::error::{contract, Error, Result};
use crate::timeseries::{
    day_hours, day_window, Resolution, TimeSeries, HOURS_PER_DAY, STEPS_PER_DAY, STEPS_PER_HOUR,
};

/// Width of the intraday EV lag window and its distance from the target.
pub const INTRADAY_LAG_START: usize = 28;
pub const INTRADAY_LAG_END: usize = 24;

pub const PV_FEATURES: [&str; 9] = [
    "direct_radiation",
    "diffuse_radiation",
    "temperature",
    "wind_speed",
    "zenith",
    "solar_time",
    "month",
    "lag_sum",
    "lag_std",
];
pub const EV_FEATURES: [&str; 6] = ["month", "weekday", "hour", "lag_sum", "lag_std", "intraday_lag"];
pub const PRICE_FEATURES: [&str; 6] = ["month", "weekday", "hour", "lag_std", "load_diff", "gen_diff"];

pub fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Read access to observed data.
pub trait Observed {
    fn window(&self, range: Range<usize>) -> Result<&[f64]>;
    fn resolution(&self) -> Resolution;
}

impl Observed for TimeSeries {
    fn window(&self, range: Range<usize>) -> Result<&[f64]> {
        self.slice(range)
    }

    fn resolution(&self) -> Resolution {
        TimeSeries::resolution(self)
    }
}

/// A series as seen at issuance time: indices `>= cutoff` are unobserved.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    series: &'a TimeSeries,
    cutoff: usize,
}

impl<'a> History<'a> {
    pub fn new(series: &'a TimeSeries, cutoff: usize) -> Self {
        History { series, cutoff }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn at(&self, i: usize) -> Result<f64> {
        Ok(self.window(i..i + 1)?[0])
    }
}

impl Observed for History<'_> {
    fn window(&self, range: Range<usize>) -> Result<&[f64]> {
        if range.end > self.cutoff {
            return Err(Error::InsufficientHistory(format!(
                "index {} is not observed before cutoff {}",
                range.end - 1,
                self.cutoff
            )));
        }
        self.series.slice(range)
    }

    fn resolution(&self) -> Resolution {
        self.series.resolution()
    }
}

fn day_range(res: Resolution, d: usize) -> Range<usize> {
    match res {
        Resolution::QuarterHour => day_window(d),
        Resolution::Hourly => day_hours(d),
    }
}

fn lagged_day(d: usize, l: usize) -> Result<usize> {
    d.checked_sub(l)
        .ok_or_else(|| Error::InsufficientHistory(format!("day {d} has no {l}-day lag")))
}

/// Total over day `d - l`.
pub fn lagged_daily_sum(series: &impl Observed, d: usize, l: usize) -> Result<f64> {
    let w = series.window(day_range(series.resolution(), lagged_day(d, l)?))?;
    Ok(w.iter().sum())
}

/// Population standard deviation over day `d - 1`.
pub fn lagged_daily_std(series: &impl Observed, d: usize) -> Result<f64> {
    let w = series.window(day_range(series.resolution(), lagged_day(d, 1)?))?;
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    Ok((w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Sum over quarter steps `[k - 28, k - 25]`: the hour ending six hours
/// before `k`.
pub fn ev_intraday_lag(series: &impl Observed, k: usize) -> Result<f64> {
    let start = k.checked_sub(INTRADAY_LAG_START).ok_or_else(|| {
        Error::InsufficientHistory(format!("intraday lag at step {k} reaches before step 0"))
    })?;
    Ok(series.window(start..k - INTRADAY_LAG_END)?.iter().sum())
}

/// 24-hour differences `p[h0 + j] - p[h0 + j - 24]` for `j` in `0..24`.
pub fn price_difference(hourly: &TimeSeries, h0: usize) -> Result<Vec<f64>> {
    let lag = lag_window(hourly, h0)?;
    let ahead = hourly.slice(h0..h0 + HOURS_PER_DAY)?;
    Ok(ahead.iter().zip(lag).map(|(p, q)| p - q).collect())
}

/// The 24 observed prices preceding hour `h0`.
pub fn lag_window(hourly: &impl Observed, h0: usize) -> Result<&[f64]> {
    let start = h0.checked_sub(HOURS_PER_DAY).ok_or_else(|| {
        Error::InsufficientHistory(format!("hour {h0} has no 24-hour lag window"))
    })?;
    hourly.window(start..h0)
}

/// Inverse of [`price_difference`]: adds the lag window back.
pub fn reconstruct_prices(lag: &[f64], diffs: &[f64]) -> Result<Vec<f64>> {
    if lag.len() != diffs.len() {
        return Err(contract(format!("{} lag values for {} differences", lag.len(), diffs.len())));
    }
    Ok(lag.iter().zip(diffs).map(|(a, b)| a + b).collect())
}

/// `(f[h] - f[h - 24]) / max(f over day d)`, with `f` an hourly exogenous
/// forecast. A day whose maximum is zero yields 0.
pub fn exog_normalized_diff(forecast: &TimeSeries, h: usize, d: usize) -> Result<f64> {
    let prev = h.checked_sub(HOURS_PER_DAY).ok_or_else(|| {
        Error::InsufficientHistory(format!("hour {h} has no 24-hour lag"))
    })?;
    let day_max = forecast.slice(day_hours(d))?.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if day_max == 0.0 {
        log::warn!("exogenous forecast is zero all of day {d}; normalized difference set to 0");
        return Ok(0.0);
    }
    Ok((forecast.at(h)? - forecast.at(prev)?) / day_max)
}

/// PV feature row for target step `t`.
pub fn pv_row(b: &DatasetBundle, site: &Site, t: usize, lag_day: usize, pv: &impl Observed) -> Result<Vec<f64>> {
    let sun = solar_position(site, b.calendar.datetime(t));
    Ok(vec![
        b.direct_radiation.at(t)?,
        b.diffuse_radiation.at(t)?,
        b.temperature.at(t)?,
        b.wind_speed.at(t)?,
        sun.zenith_deg,
        sun.solar_time_hours,
        b.calendar.month(t) as f64,
        lagged_daily_sum(pv, lag_day, 1)?,
        lagged_daily_std(pv, lag_day)?,
    ])
}

/// EV feature row for target step `t`; the intraday lag is supplied by the
/// caller because forecasts fill it recursively.
pub fn ev_row(b: &DatasetBundle, t: usize, lag_day: usize, ev: &impl Observed, intraday: f64) -> Result<Vec<f64>> {
    Ok(vec![
        b.calendar.month(t) as f64,
        b.calendar.weekday(t) as f64,
        (t % STEPS_PER_DAY / STEPS_PER_HOUR) as f64,
        lagged_daily_sum(ev, lag_day, 1)?,
        lagged_daily_std(ev, lag_day)?,
        intraday,
    ])
}

/// Price feature row for target hour `h`.
pub fn price_row(b: &DatasetBundle, h: usize, lag_day: usize, price: &impl Observed) -> Result<Vec<f64>> {
    let step = h * STEPS_PER_HOUR;
    Ok(vec![
        b.calendar.month(step) as f64,
        b.calendar.weekday(step) as f64,
        (h % HOURS_PER_DAY) as f64,
        lagged_daily_std(price, lag_day)?,
        exog_normalized_diff(&b.load_forecast, h, lag_day)?,
        exog_normalized_diff(&b.gen_forecast, h, lag_day)?,
    ])
}

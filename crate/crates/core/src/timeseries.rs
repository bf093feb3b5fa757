//! Quarter-hour time grid, unit-tagged series and the dataset calendar.
//!
//! Step index 0 is the first timestamp of the ingested dataset. All lags are
//! plain index arithmetic; the calendar only exists to derive month,
//! weekday and clock-hour features.

use std::fmt;
use std::ops::Range;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Step length in hours.
pub const STEP_HOURS: f64 = 0.25;
pub const STEPS_PER_DAY: usize = 96;
pub const STEPS_PER_HOUR: usize = 4;
pub const HOURS_PER_DAY: usize = 24;

/// Discretisation of the day. Only the quarter-hour grid is used in
/// practice, but the invariants are checked for any construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step_duration_hours: f64,
    pub steps_per_day: usize,
    pub steps_per_hour: usize,
}

impl TimeGrid {
    pub const QUARTER_HOUR: TimeGrid = TimeGrid {
        step_duration_hours: STEP_HOURS,
        steps_per_day: STEPS_PER_DAY,
        steps_per_hour: STEPS_PER_HOUR,
    };

    pub fn new(steps_per_hour: usize) -> Result<Self> {
        if steps_per_hour == 0 {
            return Err(contract("steps_per_hour must be positive"));
        }
        let grid = TimeGrid {
            step_duration_hours: 1.0 / steps_per_hour as f64,
            steps_per_day: steps_per_hour * HOURS_PER_DAY,
            steps_per_hour,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_duration_hours * self.steps_per_day as f64 != 24.0 {
            return Err(contract("step_duration_hours * steps_per_day must equal 24"));
        }
        if self.step_duration_hours * self.steps_per_hour as f64 != 1.0 {
            return Err(contract("step_duration_hours * steps_per_hour must equal 1"));
        }
        Ok(())
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::QUARTER_HOUR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Kw,
    Kwh,
    Mw,
    EurPerMwh,
    /// Hourly price scaled by the step length (EUR/MWh times hours).
    EurPerMwhStep,
    /// Cost per kW held for one step.
    EurPerKwStep,
    GramsPerKwh,
    WattsPerM2,
    Celsius,
    MetersPerSecond,
    Dimensionless,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Kw => "kW",
            Unit::Kwh => "kWh",
            Unit::Mw => "MW",
            Unit::EurPerMwh => "EUR/MWh",
            Unit::EurPerMwhStep => "EUR/MWh-step",
            Unit::EurPerKwStep => "EUR/kW-step",
            Unit::GramsPerKwh => "g/kWh",
            Unit::WattsPerM2 => "W/m2",
            Unit::Celsius => "degC",
            Unit::MetersPerSecond => "m/s",
            Unit::Dimensionless => "-",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    QuarterHour,
    Hourly,
}

impl Resolution {
    pub fn minutes(self) -> i64 {
        match self {
            Resolution::QuarterHour => 15,
            Resolution::Hourly => 60,
        }
    }
}

/// Gap-free series on a uniform grid. `start` is a global index in the
/// series' own resolution (quarter-hour steps or hours).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    start: usize,
    values: Vec<f64>,
    unit: Unit,
    resolution: Resolution,
}

impl TimeSeries {
    pub fn new(start: usize, values: Vec<f64>, unit: Unit, resolution: Resolution) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at index {}", start + i)));
        }
        Ok(TimeSeries { start, values, unit, resolution })
    }

    pub fn quarter_hourly(values: Vec<f64>, unit: Unit) -> Result<Self> {
        Self::new(0, values, unit, Resolution::QuarterHour)
    }

    pub fn hourly(values: Vec<f64>, unit: Unit) -> Result<Self> {
        Self::new(0, values, unit, Resolution::Hourly)
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// One past the last covered index.
    pub fn end(&self) -> usize {
        self.start + self.values.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn covers(&self, range: &Range<usize>) -> bool {
        range.start >= self.start && range.end <= self.end()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        index
            .checked_sub(self.start)
            .and_then(|i| self.values.get(i))
            .copied()
    }

    /// Value at `index`, or an insufficient-history error.
    pub fn at(&self, index: usize) -> Result<f64> {
        self.get(index).ok_or_else(|| {
            Error::InsufficientHistory(format!(
                "index {index} outside [{}, {})",
                self.start,
                self.end()
            ))
        })
    }

    pub fn slice(&self, range: Range<usize>) -> Result<&[f64]> {
        if !self.covers(&range) {
            return Err(Error::InsufficientHistory(format!(
                "range {}..{} outside [{}, {})",
                range.start,
                range.end,
                self.start,
                self.end()
            )));
        }
        Ok(&self.values[range.start - self.start..range.end - self.start])
    }

    pub fn expect_unit(&self, unit: Unit) -> Result<()> {
        if self.unit != unit {
            return Err(Error::UnitMismatch {
                expected: unit.to_string(),
                found: self.unit.to_string(),
            });
        }
        Ok(())
    }
}

/// One daily evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub day_index: usize,
    pub first_step: usize,
    pub length: usize,
}

impl Episode {
    pub fn new(day_index: usize) -> Self {
        Episode {
            day_index,
            first_step: day_index * STEPS_PER_DAY,
            length: STEPS_PER_DAY,
        }
    }

    pub fn steps(&self) -> Range<usize> {
        self.first_step..self.first_step + self.length
    }
}

/// Quarter-hour steps of day `d`.
pub fn day_window(d: usize) -> Range<usize> {
    d * STEPS_PER_DAY..(d + 1) * STEPS_PER_DAY
}

/// Hours of day `d` on the hourly grid.
pub fn day_hours(d: usize) -> Range<usize> {
    d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY
}

pub fn day_of_step(k: usize) -> usize {
    k / STEPS_PER_DAY
}

pub fn hour_of_step(k: usize) -> usize {
    k / STEPS_PER_HOUR
}

/// Expands 24 hourly prices to 96 quarter-hour prices, each scaled by the
/// step length.
pub fn hour_to_quarter_expand(hourly: &[f64]) -> Result<Vec<f64>> {
    if hourly.len() != HOURS_PER_DAY {
        return Err(contract(format!(
            "expected {HOURS_PER_DAY} hourly values, got {}",
            hourly.len()
        )));
    }
    Ok(hourly
        .iter()
        .flat_map(|&p| std::iter::repeat_n(STEP_HOURS * p, STEPS_PER_HOUR))
        .collect())
}

/// Same as [`hour_to_quarter_expand`] on a tagged series.
pub fn expand_price_series(hourly: &TimeSeries) -> Result<TimeSeries> {
    hourly.expect_unit(Unit::EurPerMwh)?;
    let values = hour_to_quarter_expand(hourly.values())?;
    TimeSeries::new(
        hourly.start() * STEPS_PER_HOUR,
        values,
        Unit::EurPerMwhStep,
        Resolution::QuarterHour,
    )
}

/// Maps global step indices to local clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calendar {
    pub start: NaiveDateTime,
}

impl Calendar {
    pub fn new(start: NaiveDateTime) -> Result<Self> {
        if start.minute() != 0 || start.second() != 0 || start.hour() != 0 {
            return Err(contract("calendar start must be at midnight"));
        }
        Ok(Calendar { start })
    }

    pub fn from_date(date: NaiveDate) -> Self {
        Calendar { start: date.and_hms_opt(0, 0, 0).expect("midnight") }
    }

    pub fn datetime(&self, step: usize) -> NaiveDateTime {
        self.start + Duration::minutes(15 * step as i64)
    }

    pub fn hour_datetime(&self, hour: usize) -> NaiveDateTime {
        self.start + Duration::hours(hour as i64)
    }

    pub fn date_of_day(&self, day: usize) -> NaiveDate {
        self.start.date() + Duration::days(day as i64)
    }

    /// Day index of a date, or `None` before the calendar start.
    pub fn day_of_date(&self, date: NaiveDate) -> Option<usize> {
        let days = (date - self.start.date()).num_days();
        usize::try_from(days).ok()
    }

    /// Step index of a timestamp that lies on the quarter-hour grid.
    pub fn step_of(&self, t: NaiveDateTime) -> Option<usize> {
        let minutes = (t - self.start).num_minutes();
        if minutes < 0 || minutes % 15 != 0 || (t - self.start).num_seconds() % 60 != 0 {
            return None;
        }
        Some((minutes / 15) as usize)
    }

    pub fn month(&self, step: usize) -> u32 {
        self.datetime(step).month()
    }

    /// 0 = Monday.
    pub fn weekday(&self, step: usize) -> u32 {
        self.datetime(step).weekday().num_days_from_monday()
    }

    /// Fractional clock hour in `[0, 24)`.
    pub fn clock_hour(&self, step: usize) -> f64 {
        let t = self.datetime(step);
        t.hour() as f64 + t.minute() as f64 / 60.0
    }
}

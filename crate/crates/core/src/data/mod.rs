//! Dataset bundle, CSV ingestion and serialization.
//!
//! A bundle is three CSV files (schemas in `docs/csv-schemas.md`):
//!
//! - quarter-hourly power, weather and carbon-intensity columns,
//! - hourly price and exogenous national forecasts,
//! - optionally, EV charging sessions, aggregated into `ev_power` when the
//!   quarter-hourly file has no EV column.

mod config;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

pub use config::{
    select_test_days, BatteryConfig, DataConfig, EvaluationConfig, ForecastConfig, OutputConfig, RunConfig,
    SolverConfig, MIN_HISTORY_DAYS,
};
pub use synth::{synth, synth_with, SynthOptions};

use crate::error::{Error, Result};
use crate::hub::{aggregate_ev_demand, EvSession};
use crate::timeseries::{Calendar, Resolution, TimeSeries, Unit, HOURS_PER_DAY, STEPS_PER_DAY, STEPS_PER_HOUR};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
const ACCEPTED_FORMATS: [&str; 4] = [TIMESTAMP_FORMAT, "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];

pub const QUARTER_FILE: &str = "quarter_hourly.csv";
pub const HOURLY_FILE: &str = "hourly.csv";
pub const SESSIONS_FILE: &str = "sessions.csv";

/// Quarter-hourly columns: (header, unit). `ev_power_kw` is optional.
pub const QUARTER_COLUMNS: [(&str, Unit); 7] = [
    ("ev_power_kw", Unit::Kw),
    ("pv_power_kw", Unit::Kw),
    ("direct_radiation_w_m2", Unit::WattsPerM2),
    ("diffuse_radiation_w_m2", Unit::WattsPerM2),
    ("temperature_c", Unit::Celsius),
    ("wind_speed_m_s", Unit::MetersPerSecond),
    ("carbon_intensity_g_kwh", Unit::GramsPerKwh),
];

pub const HOURLY_COLUMNS: [(&str, Unit); 3] = [
    ("price_eur_mwh", Unit::EurPerMwh),
    ("load_forecast_mw", Unit::Mw),
    ("gen_forecast_mw", Unit::Mw),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub calendar: Calendar,
    pub ev_power: TimeSeries,
    pub ev_sessions: Option<Vec<EvSession>>,
    pub pv_power: TimeSeries,
    pub direct_radiation: TimeSeries,
    pub diffuse_radiation: TimeSeries,
    pub temperature: TimeSeries,
    pub wind_speed: TimeSeries,
    pub carbon_intensity: TimeSeries,
    pub price: TimeSeries,
    pub load_forecast: TimeSeries,
    pub gen_forecast: TimeSeries,
}

impl DatasetBundle {
    pub fn n_steps(&self) -> usize {
        self.ev_power.len()
    }

    pub fn n_days(&self) -> usize {
        self.n_steps() / STEPS_PER_DAY
    }

    fn quarter_series(&self) -> [&TimeSeries; 7] {
        [
            &self.ev_power,
            &self.pv_power,
            &self.direct_radiation,
            &self.diffuse_radiation,
            &self.temperature,
            &self.wind_speed,
            &self.carbon_intensity,
        ]
    }

    fn hourly_series(&self) -> [&TimeSeries; 3] {
        [&self.price, &self.load_forecast, &self.gen_forecast]
    }

    /// Common coverage, resolutions and units.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_steps();
        if n == 0 || n % STEPS_PER_DAY != 0 {
            return Err(Error::Data(format!("{n} quarter-hour steps is not a whole number of days")));
        }
        for (s, (name, unit)) in self.quarter_series().into_iter().zip(QUARTER_COLUMNS) {
            check_series(s, name, unit, Resolution::QuarterHour, n)?;
        }
        for (s, (name, unit)) in self.hourly_series().into_iter().zip(HOURLY_COLUMNS) {
            check_series(s, name, unit, Resolution::Hourly, n / STEPS_PER_HOUR)?;
        }
        if let Some(i) = self.ev_power.values().iter().position(|&v| v < 0.0) {
            return Err(Error::Data(format!("negative EV power at step {i}")));
        }
        if let Some(i) = self.pv_power.values().iter().position(|&v| v < 0.0) {
            return Err(Error::Data(format!("negative PV power at step {i}")));
        }
        Ok(())
    }

    /// Writes the three CSV files into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<BundlePaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = BundlePaths::in_dir(dir, self.ev_sessions.is_some());

        let mut w = csv::Writer::from_path(&paths.quarter_hourly)?;
        let mut header = vec!["timestamp"];
        header.extend(QUARTER_COLUMNS.iter().map(|c| c.0));
        w.write_record(&header)?;
        for k in 0..self.n_steps() {
            let mut rec = vec![self.calendar.datetime(k).format(TIMESTAMP_FORMAT).to_string()];
            rec.extend(self.quarter_series().iter().map(|s| s.values()[k].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&paths.quarter_hourly, e))?;

        let mut w = csv::Writer::from_path(&paths.hourly)?;
        let mut header = vec!["timestamp"];
        header.extend(HOURLY_COLUMNS.iter().map(|c| c.0));
        w.write_record(&header)?;
        for h in 0..self.price.len() {
            let mut rec = vec![self.calendar.hour_datetime(h).format(TIMESTAMP_FORMAT).to_string()];
            rec.extend(self.hourly_series().iter().map(|s| s.values()[h].to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&paths.hourly, e))?;

        if let (Some(sessions), Some(path)) = (&self.ev_sessions, &paths.sessions) {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["arrival", "departure", "energy_kwh"])?;
            for s in sessions {
                w.write_record([
                    self.calendar.datetime(s.arrival_step).format(TIMESTAMP_FORMAT).to_string(),
                    self.calendar.datetime(s.departure_step).format(TIMESTAMP_FORMAT).to_string(),
                    s.energy_kwh.to_string(),
                ])?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(paths)
    }
}

fn check_series(s: &TimeSeries, name: &str, unit: Unit, res: Resolution, len: usize) -> Result<()> {
    if s.unit() != unit {
        return Err(Error::UnitMismatch { expected: unit.to_string(), found: format!("{} ({name})", s.unit()) });
    }
    if s.resolution() != res || s.start() != 0 || s.len() != len {
        return Err(Error::Data(format!(
            "{name}: expected {len} {res:?} values from index 0, found {} from {}",
            s.len(),
            s.start()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundlePaths {
    pub quarter_hourly: PathBuf,
    pub hourly: PathBuf,
    #[serde(default)]
    pub sessions: Option<PathBuf>,
}

impl BundlePaths {
    pub fn in_dir(dir: &Path, with_sessions: bool) -> Self {
        BundlePaths {
            quarter_hourly: dir.join(QUARTER_FILE),
            hourly: dir.join(HOURLY_FILE),
            sessions: with_sessions.then(|| dir.join(SESSIONS_FILE)),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut v = vec![self.quarter_hourly.as_path(), self.hourly.as_path()];
        v.extend(self.sessions.as_deref());
        v
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    ACCEPTED_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

struct Table {
    file: String,
    start: NaiveDateTime,
    columns: Vec<Option<Vec<f64>>>,
}

fn schema(file: &str, message: impl Into<String>) -> Error {
    Error::Schema { file: file.to_string(), message: message.into() }
}

/// Reads a timestamped table on a uniform grid. `required[i]` says whether
/// column `names[i]` must be present. Line numbers in diagnostics count the
/// header as line 1.
fn read_table(path: &Path, names: &[&str], required: &[bool], step: Duration) -> Result<Table> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let ts_col = headers
        .iter()
        .position(|h| h == "timestamp")
        .ok_or_else(|| schema(&file, "missing `timestamp` column"))?;
    let mut positions = Vec::with_capacity(names.len());
    for (name, &req) in names.iter().zip(required) {
        let pos = headers.iter().position(|h| h == *name);
        if pos.is_none() && req {
            return Err(schema(&file, format!("missing column `{name}`")));
        }
        positions.push(pos);
    }
    let mut columns: Vec<Option<Vec<f64>>> = positions.iter().map(|p| p.map(|_| Vec::new())).collect();
    let mut start = None;
    let mut expected = None;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let raw = rec.get(ts_col).unwrap_or_default();
        let t = parse_timestamp(raw)
            .ok_or_else(|| schema(&file, format!("line {line}: unparseable timestamp `{raw}`")))?;
        match expected {
            None => {
                if t.hour() != 0 || t.minute() != 0 || t.second() != 0 {
                    return Err(schema(&file, format!("line {line}: first timestamp {t} is not midnight")));
                }
                start = Some(t);
            }
            Some(e) if t > e => {
                return Err(Error::Gap { file, row: line, missing: e.format(TIMESTAMP_FORMAT).to_string() });
            }
            Some(e) if t < e => {
                return Err(schema(
                    &file,
                    format!("line {line}: timestamp {t} is not after the previous row (expected {e})"),
                ));
            }
            Some(_) => {}
        }
        expected = Some(t + step);
        for ((pos, col), name) in positions.iter().zip(columns.iter_mut()).zip(names) {
            if let (Some(p), Some(col)) = (pos, col) {
                let cell = rec.get(*p).unwrap_or_default();
                let v: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| schema(&file, format!("line {line}: bad value `{cell}` in `{name}`")))?;
                col.push(v);
            }
        }
    }
    let start = start.ok_or_else(|| schema(&file, "no data rows"))?;
    Ok(Table { file, start, columns })
}

fn read_sessions(path: &Path, calendar: &Calendar) -> Result<Vec<EvSession>> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| schema(&file, format!("missing column `{name}`")))
    };
    let (a, d, e) = (col("arrival")?, col("departure")?, col("energy_kwh")?);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let step = |c: usize| {
            let raw = rec.get(c).unwrap_or_default();
            parse_timestamp(raw)
                .and_then(|t| calendar.step_of(t))
                .ok_or_else(|| schema(&file, format!("line {line}: `{raw}` is not a quarter-hour timestamp in range")))
        };
        let raw_e = rec.get(e).unwrap_or_default();
        let energy: f64 = raw_e
            .parse()
            .map_err(|_| schema(&file, format!("line {line}: bad energy `{raw_e}`")))?;
        let s = EvSession::new(step(a)?, step(d)?, energy)
            .map_err(|err| schema(&file, format!("line {line}: {err}")))?;
        out.push(s);
    }
    Ok(out)
}

/// Reads and validates a bundle.
pub fn ingest(paths: &BundlePaths) -> Result<DatasetBundle> {
    let names: Vec<&str> = QUARTER_COLUMNS.iter().map(|c| c.0).collect();
    let required: Vec<bool> = names.iter().map(|n| *n != "ev_power_kw").collect();
    let q = read_table(&paths.quarter_hourly, &names, &required, Duration::minutes(15))?;
    let calendar = Calendar::new(q.start)?;
    let n = q.columns[1].as_ref().map_or(0, Vec::len);
    if n % STEPS_PER_DAY != 0 {
        return Err(schema(&q.file, format!("{n} rows is not a whole number of days")));
    }

    let hnames: Vec<&str> = HOURLY_COLUMNS.iter().map(|c| c.0).collect();
    let h = read_table(&paths.hourly, &hnames, &[true; 3], Duration::hours(1))?;
    if h.start != q.start {
        return Err(schema(&h.file, format!("starts at {}, quarter-hourly data starts at {}", h.start, q.start)));
    }
    let n_hours = h.columns[0].as_ref().map_or(0, Vec::len);
    if n_hours != n / STEPS_PER_HOUR {
        return Err(schema(
            &h.file,
            format!("{n_hours} hourly rows for {} days of quarter-hourly data", n / STEPS_PER_DAY),
        ));
    }
    debug_assert_eq!(n_hours % HOURS_PER_DAY, 0);

    let sessions = paths.sessions.as_deref().map(|p| read_sessions(p, &calendar)).transpose()?;
    let mut qcols = q.columns.into_iter();
    let ev_power = match (qcols.next().flatten(), &sessions) {
        (Some(v), _) => TimeSeries::quarter_hourly(v, Unit::Kw)?,
        (None, Some(s)) => aggregate_ev_demand(s, 0..n)?,
        (None, None) => {
            return Err(schema(&q.file, "no `ev_power_kw` column and no session file"));
        }
    };
    let mut quarter = QUARTER_COLUMNS[1..]
        .iter()
        .zip(qcols)
        .map(|(&(_, unit), v)| TimeSeries::quarter_hourly(v.expect("required column"), unit));
    let mut next_q = || quarter.next().expect("column count");
    let pv_power = next_q()?;
    let direct_radiation = next_q()?;
    let diffuse_radiation = next_q()?;
    let temperature = next_q()?;
    let wind_speed = next_q()?;
    let carbon_intensity = next_q()?;
    let mut hourly = HOURLY_COLUMNS
        .iter()
        .zip(h.columns)
        .map(|(&(_, unit), v)| TimeSeries::hourly(v.expect("required column"), unit));
    let mut next_h = || hourly.next().expect("column count");
    let bundle = DatasetBundle {
        calendar,
        ev_power,
        ev_sessions: sessions,
        pv_power,
        direct_radiation,
        diffuse_radiation,
        temperature,
        wind_speed,
        carbon_intensity,
        price: next_h()?,
        load_forecast: next_h()?,
        gen_forecast: next_h()?,
    };
    bundle.validate()?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetBundle {
        synth(3, 14).unwrap()
    }

    #[test]
    fn write_then_ingest_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let b = small();
        let paths = b.write_csv(dir.path()).unwrap();
        let back = ingest(&paths).unwrap();
        assert_eq!(b, back);
    }

    #[test]
    fn removed_row_reports_gap() {
        let dir = tempfile::tempdir().unwrap();
        let paths = small().write_csv(dir.path()).unwrap();
        let text = fs::read_to_string(&paths.quarter_hourly).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(11);
        fs::write(&paths.quarter_hourly, lines.join("\n")).unwrap();
        match ingest(&paths) {
            Err(Error::Gap { row, missing, .. }) => {
                assert_eq!(row, 12);
                assert_eq!(missing, "2021-01-01T02:30:00");
            }
            other => panic!("expected gap, got {other:?}"),
        }
    }

    #[test]
    fn swapped_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let paths = small().write_csv(dir.path()).unwrap();
        let text = fs::read_to_string(&paths.hourly).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(5, 6);
        fs::write(&paths.hourly, lines.join("\n")).unwrap();
        assert!(matches!(ingest(&paths), Err(Error::Gap { .. }) | Err(Error::Schema { .. })));
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let paths = small().write_csv(dir.path()).unwrap();
        let text = fs::read_to_string(&paths.hourly).unwrap();
        fs::write(&paths.hourly, text.replacen("price_eur_mwh", "price", 1)).unwrap();
        let err = ingest(&paths).unwrap_err();
        assert!(err.to_string().contains("price_eur_mwh"), "{err}");
    }

    #[test]
    fn single_session_matches_hand_computation() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = small();
        let paths = b.write_csv(dir.path()).unwrap();
        // Drop the EV column and supply one session: 10 kWh from 02:30 to
        // 05:00, i.e. steps 10..=20 at 10 / (0.25 * 10) = 4 kW.
        let text = fs::read_to_string(&paths.quarter_hourly).unwrap();
        let stripped: String = text
            .lines()
            .map(|l| {
                let mut cells: Vec<&str> = l.split(',').collect();
                cells.remove(1);
                cells.join(",") + "\n"
            })
            .collect();
        fs::write(&paths.quarter_hourly, stripped).unwrap();
        let sessions = dir.path().join(SESSIONS_FILE);
        fs::write(&sessions, "arrival,departure,energy_kwh\n2021-01-01T02:30:00,2021-01-01T05:00:00,10\n").unwrap();
        let got = ingest(&BundlePaths { sessions: Some(sessions), ..paths }).unwrap();
        let expected: Vec<f64> = (0..b.n_steps()).map(|k| if (10..=20).contains(&k) { 4.0 } else { 0.0 }).collect();
        assert_eq!(got.ev_power.values(), expected.as_slice());
        b.ev_power = got.ev_power.clone();
        assert_eq!(got.pv_power, b.pv_power);
    }

    #[test]
    fn bad_value_names_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let paths = small().write_csv(dir.path()).unwrap();
        let text = fs::read_to_string(&paths.hourly).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let cells: Vec<&str> = lines[3].split(',').collect();
        lines[3] = format!("{},abc,{},{}", cells[0], cells[2], cells[3]);
        fs::write(&paths.hourly, lines.join("\n")).unwrap();
        let err = ingest(&paths).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("price_eur_mwh"), "{err}");
    }
}

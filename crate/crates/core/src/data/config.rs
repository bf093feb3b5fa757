//! TOML run configuration. Key reference: `docs/config.md`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ingest, synth_with, BundlePaths, DatasetBundle, SynthOptions};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forecast::enbpi::EnbpiParams;
use crate::forecast::gbt::{GbtParams, TreeParams};
use crate::forecast::solar::Site;
use crate::hub::{BatteryParams, Spline};
use crate::metrics::{season_of, Season};
use crate::mpc::ControllerKind;
use crate::solver::SolverSettings;

/// Days of history the forecaster needs before the first test day.
pub const MIN_HISTORY_DAYS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
    pub data: DataConfig,
    #[serde(default)]
    pub site: Site,
    #[serde(default)]
    pub battery: BatteryConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Either `synthetic_days` or the CSV paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub synthetic_days: Option<usize>,
    pub synthetic_start: Option<chrono::NaiveDate>,
    pub quarter_hourly: Option<PathBuf>,
    pub hourly: Option<PathBuf>,
    pub sessions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub e_init: f64,
    /// `[a, b]` pairs: slope in 1/h and intercept in kW.
    pub splines: Vec<[f64; 2]>,
    pub p_ib_bound: Option<f64>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        let p = BatteryParams::default();
        BatteryConfig {
            e_min: p.e_min,
            e_max: p.e_max,
            e_init: p.e_init,
            splines: p.splines.iter().map(|s| [s.a, s.b]).collect(),
            p_ib_bound: None,
        }
    }
}

impl BatteryConfig {
    pub fn params(&self) -> Result<BatteryParams> {
        let splines = self.splines.iter().map(|&[a, b]| Spline { a, b }).collect();
        let mut p = BatteryParams::new(self.e_min, self.e_max, self.e_init, splines)
            .map_err(|e| Error::Config(format!("battery: {e}")))?;
        if let Some(bound) = self.p_ib_bound {
            p.p_ib_bound = bound;
            p.validate().map_err(|e| Error::Config(format!("battery: {e}")))?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    pub nu: f64,
    pub max_rounds: usize,
    pub patience: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_bins: usize,
    pub estimators: usize,
    pub alpha: f64,
    /// Chronological train / validation / calibration fractions of the
    /// pre-test days.
    pub split: [f64; 3],
    /// Use at most this many days before the test period for training.
    pub history_days: Option<usize>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        let e = EnbpiParams::default();
        ForecastConfig {
            nu: e.gbt.nu,
            max_rounds: e.gbt.max_rounds,
            patience: e.gbt.patience,
            max_depth: e.gbt.tree.max_depth,
            min_leaf: e.gbt.tree.min_leaf,
            max_bins: e.gbt.tree.max_bins,
            estimators: e.estimators,
            alpha: e.alpha,
            split: [0.7, 0.15, 0.15],
            history_days: None,
        }
    }
}

impl ForecastConfig {
    pub fn enbpi(&self, seed: u64) -> EnbpiParams {
        EnbpiParams {
            estimators: self.estimators,
            alpha: self.alpha,
            seed,
            gbt: GbtParams {
                nu: self.nu,
                max_rounds: self.max_rounds,
                patience: self.patience,
                tree: TreeParams { max_depth: self.max_depth, min_leaf: self.min_leaf, max_bins: self.max_bins },
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("forecast: {m}")));
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad("nu must lie in (0, 1]");
        }
        if self.estimators < 10 {
            return bad("estimators must be at least 10");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.max_bins < 2 || self.max_bins > 256 {
            return bad("max_bins must lie in [2, 256]");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be positive");
        }
        if self.split.iter().any(|&f| !(f > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split fractions must be positive and sum to 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// First day of the test period; defaults to two thirds into the data.
    pub test_start_day: Option<usize>,
    pub days_per_season: usize,
    pub controllers: Vec<ControllerKind>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { test_start_day: None, days_per_season: 70, controllers: ControllerKind::ALL.to_vec() }
    }
}

/// Interior-point settings for the MPC programs. The tolerance is tighter
/// than the solver default so plan checks at 1e-7 have margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: u32,
    pub regularization: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-9, max_iter: 200, regularization: SolverSettings::default().regularization }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings { tol: self.tol, max_iter: self.max_iter, regularization: self.regularization, ..SolverSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.data.quarter_hourly, &mut cfg.data.hourly, &mut cfg.data.sessions].into_iter().flatten() {
            resolve(p);
        }
        resolve(&mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn bundle_paths(&self) -> Option<BundlePaths> {
        Some(BundlePaths {
            quarter_hourly: self.data.quarter_hourly.clone()?,
            hourly: self.data.hourly.clone()?,
            sessions: self.data.sessions.clone(),
        })
    }

    /// Static checks, including that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        match (self.data.synthetic_days, self.bundle_paths()) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("data: give either synthetic_days or CSV paths, not both".into()));
            }
            (None, None) => {
                return Err(Error::Config("data: need synthetic_days or both quarter_hourly and hourly".into()));
            }
            (None, Some(paths)) => {
                for p in paths.all() {
                    if !p.is_file() {
                        return Err(Error::Config(format!("data: file {} does not exist", p.display())));
                    }
                }
            }
            (Some(d), None) if d < super::synth::MIN_DAYS => {
                return Err(Error::Config(format!("data: synthetic_days must be at least {}", super::synth::MIN_DAYS)));
            }
            _ => {}
        }
        self.battery.params()?;
        self.forecast.validate()?;
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver: tol must be positive".into()));
        }
        if !(self.solver.regularization > 0.0) {
            return Err(Error::Config("solver: regularization must be positive".into()));
        }
        if self.evaluation.controllers.is_empty() {
            return Err(Error::Config("evaluation: no controllers".into()));
        }
        if self.evaluation.days_per_season == 0 {
            return Err(Error::Config("evaluation: days_per_season must be positive".into()));
        }
        Ok(())
    }

    pub fn load_bundle(&self) -> Result<DatasetBundle> {
        if let Some(days) = self.data.synthetic_days {
            let mut opts = SynthOptions { site: self.site, ..SynthOptions::default() };
            if let Some(start) = self.data.synthetic_start {
                opts.start = start;
            }
            return synth_with(self.seed, days, &opts);
        }
        let paths = self.bundle_paths().ok_or_else(|| Error::Config("data: no input files".into()))?;
        ingest(&paths)
    }

    /// First test day for a bundle of `n_days`.
    pub fn test_start_day(&self, n_days: usize) -> Result<usize> {
        let start = self.evaluation.test_start_day.unwrap_or(n_days * 2 / 3);
        if start < MIN_HISTORY_DAYS + 2 || start + 1 >= n_days {
            return Err(Error::Config(format!(
                "test period starting at day {start} leaves no room in {n_days} days of data"
            )));
        }
        Ok(start)
    }

    /// Evenly spaced test days per meteorological season, with a seeded
    /// phase. A test day needs the following day's data for the forecast
    /// window, so the last day is never selected.
    pub fn test_days(&self, bundle: &DatasetBundle) -> Result<Vec<usize>> {
        let start = self.test_start_day(bundle.n_days())?;
        select_test_days(bundle, start, self.evaluation.days_per_season, self.seed)
    }
}

pub fn select_test_days(bundle: &DatasetBundle, start: usize, per_season: usize, seed: u64) -> Result<Vec<usize>> {
    let last = bundle.n_days().saturating_sub(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_da75);
    let mut out = Vec::new();
    for season in Season::ALL {
        let days: Vec<usize> = (start..last).filter(|&d| season_of(&bundle.calendar, d) == season).collect();
        if days.len() <= per_season {
            out.extend(days);
            continue;
        }
        let phase: f64 = rng.random();
        let stride = days.len() as f64 / per_season as f64;
        out.extend((0..per_season).map(|i| days[((i as f64 + phase) * stride) as usize]));
    }
    out.sort_unstable();
    if out.is_empty() {
        return Err(Error::Config("no test days available".into()));
    }
    Ok(out)
}

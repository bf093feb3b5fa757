//! The three-target hub forecaster: training, 24-hour-ahead issuance and
//! model artifacts.

use std::fs;
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::enbpi::{fit_enbpi, EnbpiModel, EnbpiParams};
use super::features::{
    ev_intraday_lag, ev_row, lag_window, names, price_difference, price_row, pv_row, reconstruct_prices, History,
    EV_FEATURES, INTRADAY_LAG_END, INTRADAY_LAG_START, PRICE_FEATURES, PV_FEATURES,
};
use super::gbt::FeatureMatrix;
use super::scenario::{build_scenario_tree, ScenarioTree};
use super::solar::Site;
use crate::data::{DatasetBundle, MIN_HISTORY_DAYS};
use crate::error::{contract, Error, Result};
use crate::exec::Execution;
use crate::timeseries::{day_hours, day_of_step, day_window, HOURS_PER_DAY, STEPS_PER_DAY, STEPS_PER_HOUR};

pub const ARTIFACT_FORMAT: &str = "chargehub-forecaster";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Ev,
    Pv,
    Price,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Ev, Target::Pv, Target::Price];

    pub fn name(self) -> &'static str {
        match self {
            Target::Ev => "ev",
            Target::Pv => "pv",
            Target::Price => "price",
        }
    }
}

/// Chronological day ranges used for fitting, early stopping and
/// conformal calibration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSplit {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub calibration: Range<usize>,
}

impl TrainSplit {
    /// Splits `days` by the given fractions. Day 0 is skipped since it has
    /// no lagged day.
    pub fn chronological(days: Range<usize>, fractions: [f64; 3]) -> Result<Self> {
        let start = days.start.max(1);
        let n = days.end.saturating_sub(start);
        let n_train = (n as f64 * fractions[0]).round() as usize;
        let n_val = (n as f64 * fractions[1]).round() as usize;
        if n_train == 0 || n_val == 0 || n_train + n_val >= n {
            return Err(Error::Config(format!("{n} training days cannot be split as {fractions:?}")));
        }
        Ok(TrainSplit {
            train: start..start + n_train,
            validation: start + n_train..start + n_train + n_val,
            calibration: start + n_train + n_val..days.end,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Band {
    fn with_width(point: Vec<f64>, w: f64, clip: bool) -> Band {
        let f = |v: f64| if clip { v.max(0.0) } else { v };
        let point: Vec<f64> = point.into_iter().map(f).collect();
        Band {
            lower: point.iter().map(|&p| f(p - w)).collect(),
            upper: point.iter().map(|&p| f(p + w)).collect(),
            point,
        }
    }

    pub fn variants(&self) -> Vec<Vec<f64>> {
        vec![self.point.clone(), self.lower.clone(), self.upper.clone()]
    }
}

/// Forecasts issued at quarter step `issued_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub issued_at: usize,
    /// kW, steps `issued_at..issued_at + 96`.
    pub ev: Band,
    pub pv: Band,
    /// EUR/MWh for hours `issued_at / 4 ..` (24 values).
    pub price: Band,
    /// Quarter steps between the first forecast hour's start and `issued_at`.
    pub price_offset: usize,
    pub seconds: f64,
}

impl ForecastSet {
    /// Single-branch tree from the point forecasts.
    pub fn point_tree(&self) -> Result<ScenarioTree> {
        build_scenario_tree(
            std::slice::from_ref(&self.ev.point),
            std::slice::from_ref(&self.pv.point),
            std::slice::from_ref(&self.price.point),
            self.price_offset,
        )
    }

    /// 27-branch tree over (point, lower, upper) of every variable.
    pub fn scenario_tree(&self) -> Result<ScenarioTree> {
        build_scenario_tree(&self.ev.variants(), &self.pv.variants(), &self.price.variants(), self.price_offset)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubForecaster {
    pub format: String,
    pub version: u32,
    pub site: Site,
    pub split: TrainSplit,
    pub ev: EnbpiModel,
    pub pv: EnbpiModel,
    pub price: EnbpiModel,
}

/// Feature rows and targets for one target over whole days.
pub fn training_rows(b: &DatasetBundle, site: &Site, target: Target, days: Range<usize>) -> Result<(FeatureMatrix, Vec<f64>)> {
    let mut y = Vec::new();
    let mut x = match target {
        Target::Ev => FeatureMatrix::new(names(&EV_FEATURES)),
        Target::Pv => FeatureMatrix::new(names(&PV_FEATURES)),
        Target::Price => FeatureMatrix::new(names(&PRICE_FEATURES)),
    };
    for d in days {
        if d == 0 {
            return Err(contract("training day 0 has no lagged day"));
        }
        match target {
            Target::Pv => {
                for t in day_window(d) {
                    x.push_row(&pv_row(b, site, t, d, &b.pv_power)?)?;
                    y.push(b.pv_power.at(t)?);
                }
            }
            Target::Ev => {
                for t in day_window(d) {
                    let intraday = ev_intraday_lag(&b.ev_power, t)?;
                    x.push_row(&ev_row(b, t, d, &b.ev_power, intraday)?)?;
                    y.push(b.ev_power.at(t)?);
                }
            }
            Target::Price => {
                let diffs = price_difference(&b.price, day_hours(d).start)?;
                for (h, diff) in day_hours(d).zip(diffs) {
                    x.push_row(&price_row(b, h, d, &b.price)?)?;
                    y.push(diff);
                }
            }
        }
    }
    Ok((x, y))
}

impl HubForecaster {
    pub fn train(b: &DatasetBundle, site: &Site, split: &TrainSplit, params: &EnbpiParams, exec: Execution) -> Result<Self> {
        if split.calibration.end > b.n_days() {
            return Err(contract("training split extends past the data"));
        }
        let mut models = Vec::with_capacity(3);
        for (i, target) in Target::ALL.into_iter().enumerate() {
            let started = Instant::now();
            let (xt, yt) = training_rows(b, site, target, split.train.clone())?;
            let (xv, yv) = training_rows(b, site, target, split.validation.clone())?;
            let (xc, yc) = training_rows(b, site, target, split.calibration.clone())?;
            let p = EnbpiParams { seed: params.seed.wrapping_add(i as u64), ..*params };
            let m = fit_enbpi(&xt, &yt, Some((&xv, &yv)), Some((&xc, &yc)), &p, exec)?;
            log::info!(
                "trained {} model on {} rows in {:.1}s (mean rounds {:.1}, half-width {:.4})",
                target.name(),
                xt.n_rows(),
                started.elapsed().as_secs_f64(),
                m.estimators.iter().map(|e| e.n_rounds as f64).sum::<f64>() / m.estimators.len() as f64,
                m.half_width()
            );
            models.push(m);
        }
        let price = models.pop().expect("three models");
        let pv = models.pop().expect("three models");
        let ev = models.pop().expect("three models");
        Ok(HubForecaster {
            format: ARTIFACT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            site: *site,
            split: split.clone(),
            ev,
            pv,
            price,
        })
    }

    pub fn model(&self, target: Target) -> &EnbpiModel {
        match target {
            Target::Ev => &self.ev,
            Target::Pv => &self.pv,
            Target::Price => &self.price,
        }
    }

    /// Copy whose intervals all have zero width.
    pub fn with_zero_width(&self) -> Result<Self> {
        let mut f = self.clone();
        for m in [&mut f.ev, &mut f.pv, &mut f.price] {
            *m = m.clone().with_residuals(vec![0.0])?;
        }
        Ok(f)
    }

    /// 24-hour-ahead forecasts issued at quarter step `k`, reading only
    /// observations before `k`. EV steps whose intraday lag window reaches
    /// `k` or later use this window's own point predictions.
    pub fn forecast(&self, b: &DatasetBundle, k: usize) -> Result<ForecastSet> {
        let started = Instant::now();
        let d = day_of_step(k);
        if d < MIN_HISTORY_DAYS {
            return Err(Error::InsufficientHistory(format!(
                "forecast at step {k} needs {MIN_HISTORY_DAYS} days of history"
            )));
        }
        let pv_hist = History::new(&b.pv_power, k);
        let ev_hist = History::new(&b.ev_power, k);
        let window = k..k + STEPS_PER_DAY;

        let pv_point = window
            .clone()
            .map(|t| Ok(self.pv.predict_point(&pv_row(b, &self.site, t, d, &pv_hist)?)))
            .collect::<Result<Vec<f64>>>()?;

        let mut ev_point: Vec<f64> = Vec::with_capacity(STEPS_PER_DAY);
        for t in window.clone() {
            let mut intraday = 0.0;
            for s in t - INTRADAY_LAG_START..t - INTRADAY_LAG_END {
                intraday += if s < k { ev_hist.at(s)? } else { ev_point[s - k] };
            }
            let p = self.ev.predict_point(&ev_row(b, t, d, &ev_hist, intraday)?);
            ev_point.push(p.max(0.0));
        }

        let h0 = k / STEPS_PER_HOUR;
        let price_hist = History::new(&b.price, h0);
        let diffs = (h0..h0 + HOURS_PER_DAY)
            .map(|h| Ok(self.price.predict_point(&price_row(b, h, d, &price_hist)?)))
            .collect::<Result<Vec<f64>>>()?;
        let price_point = reconstruct_prices(lag_window(&price_hist, h0)?, &diffs)?;

        Ok(ForecastSet {
            issued_at: k,
            ev: Band::with_width(ev_point, self.ev.half_width(), true),
            pv: Band::with_width(pv_point, self.pv.half_width(), true),
            price: Band::with_width(price_point, self.price.half_width(), false),
            price_offset: k - h0 * STEPS_PER_HOUR,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Forecasts issued at every step of day `d`.
    pub fn forecast_day(&self, b: &DatasetBundle, d: usize, exec: Execution) -> Result<Vec<ForecastSet>> {
        let first = day_window(d).start;
        exec.try_map(STEPS_PER_DAY, |i| self.forecast(b, first + i))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(&text)
            .map_err(|e| Error::Artifact(format!("{}: not a forecaster artifact ({e})", path.display())))?;
        if header.format != ARTIFACT_FORMAT || header.version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!(
                "{}: expected {ARTIFACT_FORMAT} v{ARTIFACT_VERSION}, found {} v{}",
                path.display(),
                header.format,
                header.version
            )));
        }
        Ok(serde_json::from_str(&text)?)
    }
}

//! Forecast accuracy and coverage, and controller performance tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::forecast::forecaster::Target;
use crate::mpc::ControllerKind;
use crate::timeseries::Calendar;

/// Range-normalized mean absolute error: `sum(AE) / (n * (max AE - min AE))`.
pub fn nmae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let ae = abs_errors(y, yhat)?;
    let (lo, hi) = min_max(&ae);
    if hi == lo {
        return Err(Error::Data(format!(
            "nMAE undefined: all {} absolute errors equal {hi}",
            ae.len()
        )));
    }
    Ok(ae.iter().sum::<f64>() / (ae.len() as f64 * (hi - lo)))
}

/// nMAE with an externally supplied error range, for subsets scored
/// against a whole test set.
pub fn nmae_with_range(y: &[f64], yhat: &[f64], range: f64) -> Result<f64> {
    let ae = abs_errors(y, yhat)?;
    if !(range > 0.0) {
        return Err(Error::Data(format!("nMAE undefined: error range {range}")));
    }
    Ok(ae.iter().sum::<f64>() / (ae.len() as f64 * range))
}

pub fn abs_errors(y: &[f64], yhat: &[f64]) -> Result<Vec<f64>> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(contract(format!("{} observations for {} predictions", y.len(), yhat.len())));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).collect())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Fraction of observations inside the closed interval.
pub fn cpi(y: &[f64], lower: &[f64], upper: &[f64]) -> Result<f64> {
    if y.len() != lower.len() || y.len() != upper.len() || y.is_empty() {
        return Err(contract("cpi needs equal, non-zero lengths"));
    }
    let inside = (0..y.len()).filter(|&i| lower[i] <= y[i] && y[i] <= upper[i]).count();
    Ok(inside as f64 / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Autumn];

    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "Winter",
            Season::Spring => "Spring",
            Season::Summer => "Summer",
            Season::Autumn => "Autumn",
        }
    }
}

/// Meteorological season (Northern Hemisphere) of day `d`.
pub fn season_of(calendar: &Calendar, d: usize) -> Season {
    match calendar.date_of_day(d).month() {
        12 | 1 | 2 => Season::Winter,
        3..=5 => Season::Spring,
        6..=8 => Season::Summer,
        _ => Season::Autumn,
    }
}

/// Scales every value by `100 / reference`.
pub fn normalize_table<K: Ord + Clone + std::fmt::Debug>(raw: &BTreeMap<K, f64>, reference: &K) -> Result<BTreeMap<K, f64>> {
    let r = *raw.get(reference).ok_or_else(|| contract(format!("reference {reference:?} missing")))?;
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Data(format!("cannot normalize by reference value {r}")));
    }
    Ok(raw.iter().map(|(k, &v)| (k.clone(), if k == reference { 100.0 } else { v * 100.0 / r })).collect())
}

/// One scored forecast value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub target: Target,
    pub day: usize,
    pub season: Season,
    pub horizon: usize,
    pub observed: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScores {
    pub nmae: BTreeMap<String, f64>,
    pub cpi: BTreeMap<String, f64>,
    pub nmae_by_horizon: Vec<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastEval {
    pub alpha: f64,
    pub targets: BTreeMap<Target, TargetScores>,
}

fn season_keys() -> impl Iterator<Item = (String, Option<Season>)> {
    Season::ALL.into_iter().map(|s| (s.name().to_string(), Some(s))).chain([("Overall".to_string(), None)])
}

impl ForecastEval {
    /// Scores per target, per season and overall. The nMAE range is that of
    /// the whole test set for the target.
    pub fn from_records(records: &[ForecastRecord], alpha: f64) -> Result<Self> {
        let mut targets = BTreeMap::new();
        for target in Target::ALL {
            let rs: Vec<&ForecastRecord> = records.iter().filter(|r| r.target == target).collect();
            if rs.is_empty() {
                continue;
            }
            let ae: Vec<f64> = rs.iter().map(|r| (r.observed - r.point).abs()).collect();
            let (lo, hi) = min_max(&ae);
            let range = hi - lo;
            let mut nmae_map = BTreeMap::new();
            let mut cpi_map = BTreeMap::new();
            for (key, season) in season_keys() {
                let sub: Vec<&&ForecastRecord> = rs.iter().filter(|r| season.is_none_or(|s| r.season == s)).collect();
                if sub.is_empty() {
                    continue;
                }
                let y: Vec<f64> = sub.iter().map(|r| r.observed).collect();
                let p: Vec<f64> = sub.iter().map(|r| r.point).collect();
                let l: Vec<f64> = sub.iter().map(|r| r.lower).collect();
                let u: Vec<f64> = sub.iter().map(|r| r.upper).collect();
                nmae_map.insert(key.clone(), nmae_with_range(&y, &p, range)?);
                cpi_map.insert(key, cpi(&y, &l, &u)?);
            }
            let horizons = rs.iter().map(|r| r.horizon).max().unwrap_or(0) + 1;
            let mut sums = vec![(0.0, 0usize); horizons];
            for (r, e) in rs.iter().zip(&ae) {
                sums[r.horizon].0 += e;
                sums[r.horizon].1 += 1;
            }
            let by_h = sums.into_iter().map(|(s, n)| if n > 0 { s / (n as f64 * range) } else { f64::NAN }).collect();
            targets.insert(target, TargetScores { nmae: nmae_map, cpi: cpi_map, nmae_by_horizon: by_h, n: rs.len() });
        }
        Ok(ForecastEval { alpha, targets })
    }

    /// Two tables (nMAE and CPI): one row per target, one column per season.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,target,Winter,Spring,Summer,Autumn,Overall\n");
        for (metric, pick) in [("nmae", 0), ("cpi", 1)] {
            for (t, s) in &self.targets {
                let map = if pick == 0 { &s.nmae } else { &s.cpi };
                let _ = write!(out, "{metric},{}", t.name());
                for (key, _) in season_keys() {
                    let _ = write!(out, ",{}", map.get(&key).map_or(String::new(), |v| format!("{v:.4}")));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Per-episode inputs to the controller tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub controller: ControllerKind,
    pub day: usize,
    pub season: Season,
    /// EUR
    pub cost: f64,
    /// kg CO2, signed net
    pub emissions_kg: f64,
    /// Forecast plus solver seconds.
    pub runtime_seconds: f64,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEval {
    /// Mean daily cost per controller and season key (`Overall` included).
    pub cost: BTreeMap<ControllerKind, BTreeMap<String, f64>>,
    pub emissions: BTreeMap<ControllerKind, BTreeMap<String, f64>>,
    /// Same tables normalized so the Omniscient controller is 100.
    pub cost_normalized: BTreeMap<ControllerKind, BTreeMap<String, f64>>,
    pub emissions_normalized: BTreeMap<ControllerKind, BTreeMap<String, f64>>,
    pub runtime_seconds: BTreeMap<ControllerKind, f64>,
    /// Runtime normalized so the Stochastic controller is 100.
    pub runtime_normalized: Option<BTreeMap<ControllerKind, f64>>,
    pub episodes: BTreeMap<ControllerKind, usize>,
    pub fallbacks: BTreeMap<ControllerKind, usize>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn normalize_by_column(
    table: &BTreeMap<ControllerKind, BTreeMap<String, f64>>,
    reference: ControllerKind,
) -> Result<BTreeMap<ControllerKind, BTreeMap<String, f64>>> {
    let mut out: BTreeMap<ControllerKind, BTreeMap<String, f64>> = BTreeMap::new();
    for (key, _) in season_keys() {
        let column: BTreeMap<ControllerKind, f64> =
            table.iter().filter_map(|(c, row)| row.get(&key).map(|&v| (*c, v))).collect();
        if !column.contains_key(&reference) {
            continue;
        }
        for (c, v) in normalize_table(&column, &reference)? {
            out.entry(c).or_default().insert(key.clone(), v);
        }
    }
    Ok(out)
}

impl ControlEval {
    /// Aggregates episodes. Normalized tables need the Omniscient
    /// controller on the same days; the runtime table needs Stochastic.
    pub fn from_episodes(episodes: &[EpisodeSummary]) -> Result<Self> {
        let controllers: Vec<ControllerKind> = {
            let mut v: Vec<ControllerKind> = episodes.iter().map(|e| e.controller).collect();
            v.sort();
            v.dedup();
            v
        };
        let mut cost = BTreeMap::new();
        let mut emissions = BTreeMap::new();
        let mut runtime_seconds = BTreeMap::new();
        let mut counts = BTreeMap::new();
        let mut fallbacks = BTreeMap::new();
        for &c in &controllers {
            let eps: Vec<&EpisodeSummary> = episodes.iter().filter(|e| e.controller == c).collect();
            let mut crow = BTreeMap::new();
            let mut erow = BTreeMap::new();
            for (key, season) in season_keys() {
                let sub = || eps.iter().filter(|e| season.is_none_or(|s| e.season == s));
                if let Some(m) = mean(sub().map(|e| e.cost)) {
                    crow.insert(key.clone(), m);
                    erow.insert(key, mean(sub().map(|e| e.emissions_kg)).expect("non-empty"));
                }
            }
            cost.insert(c, crow);
            emissions.insert(c, erow);
            runtime_seconds.insert(c, mean(eps.iter().map(|e| e.runtime_seconds)).unwrap_or(0.0));
            counts.insert(c, eps.len());
            fallbacks.insert(c, eps.iter().map(|e| e.fallbacks).sum());
        }
        let (cost_normalized, emissions_normalized) = if controllers.contains(&ControllerKind::Omniscient) {
            (
                normalize_by_column(&cost, ControllerKind::Omniscient)?,
                normalize_by_column(&emissions, ControllerKind::Omniscient)?,
            )
        } else {
            (BTreeMap::new(), BTreeMap::new())
        };
        let runtime_normalized = controllers
            .contains(&ControllerKind::Stochastic)
            .then(|| normalize_table(&runtime_seconds, &ControllerKind::Stochastic))
            .transpose()?;
        Ok(ControlEval {
            cost,
            emissions,
            cost_normalized,
            emissions_normalized,
            runtime_seconds,
            runtime_normalized,
            episodes: counts,
            fallbacks,
        })
    }

    /// Cost and emissions tables, raw and normalized.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("table,controller,Winter,Spring,Summer,Autumn,Overall\n");
        let tables = [
            ("cost_eur", &self.cost),
            ("cost_normalized", &self.cost_normalized),
            ("emissions_kg", &self.emissions),
            ("emissions_normalized", &self.emissions_normalized),
        ];
        for (name, table) in tables {
            for (c, row) in table {
                let _ = write!(out, "{name},{}", c.name());
                for (key, _) in season_keys() {
                    let _ = write!(out, ",{}", row.get(&key).map_or(String::new(), |v| format!("{v:.4}")));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn runtime_csv(&self) -> String {
        let mut out = String::from("controller,episodes,mean_episode_seconds,normalized_percent,fallbacks\n");
        for (c, secs) in &self.runtime_seconds {
            let norm = self.runtime_normalized.as_ref().and_then(|m| m.get(c)).map_or(String::new(), |v| format!("{v:.2}"));
            let _ = writeln!(out, "{},{},{secs:.4},{norm},{}", c.name(), self.episodes[c], self.fallbacks[c]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    #[test]
    fn nmae_examples() {
        assert_eq!(nmae(&[0.0, 0.0, 0.0], &[0.0, 1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(nmae(&[1.0, 1.0, 1.0, 3.0], &[0.0, 0.0, 0.0, 0.0]).unwrap(), 0.75);
        assert!(nmae(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(nmae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cpi_examples() {
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let lo = vec![0.0; 10];
        let mut hi = vec![8.5; 10];
        assert_eq!(cpi(&y, &lo, &hi).unwrap(), 0.9);
        hi[9] = 9.0;
        assert_eq!(cpi(&y, &lo, &hi).unwrap(), 1.0);
        assert_eq!(cpi(&[2.0], &[2.0], &[2.0]).unwrap(), 1.0);
        assert_eq!(cpi(&[5.0, 6.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn seasons() {
        let cal = Calendar::from_date(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
        assert_eq!(season_of(&cal, 0), Season::Winter);
        assert_eq!(season_of(&cal, 100), Season::Spring);
        assert_eq!(season_of(&cal, 200), Season::Summer);
        assert_eq!(season_of(&cal, 300), Season::Autumn);
        assert_eq!(season_of(&cal, 340), Season::Winter);
    }

    #[test]
    fn normalization_examples() {
        let raw = BTreeMap::from([(ControllerKind::Omniscient, 10.0), (ControllerKind::Deterministic, 11.365)]);
        let n = normalize_table(&raw, &ControllerKind::Omniscient).unwrap();
        assert_eq!(n[&ControllerKind::Omniscient], 100.0);
        assert!((n[&ControllerKind::Deterministic] - 113.65).abs() < 1e-9);
        let eq = BTreeMap::from([("a", 3.0), ("b", 3.0)]);
        assert!(normalize_table(&eq, &"a").unwrap().values().all(|&v| v == 100.0));
        let rt = BTreeMap::from([(ControllerKind::Stochastic, 40.0), (ControllerKind::Recourse, 30.0)]);
        assert_eq!(normalize_table(&rt, &ControllerKind::Stochastic).unwrap()[&ControllerKind::Stochastic], 100.0);
        let zero = BTreeMap::from([("a", 0.0)]);
        assert!(normalize_table(&zero, &"a").is_err());
    }

    #[test]
    fn overall_is_the_season_weighted_mean() {
        let mut eps = Vec::new();
        for (i, season) in Season::ALL.into_iter().enumerate() {
            for d in 0..5 {
                for c in [ControllerKind::Omniscient, ControllerKind::Stochastic] {
                    let bump = if c == ControllerKind::Stochastic { 1.1 } else { 1.0 };
                    eps.push(EpisodeSummary {
                        controller: c,
                        day: i * 10 + d,
                        season,
                        cost: bump * (10.0 + i as f64 + d as f64 * 0.5),
                        emissions_kg: 3.0,
                        runtime_seconds: if c == ControllerKind::Stochastic { 20.0 } else { 1.0 },
                        fallbacks: 0,
                    });
                }
            }
        }
        let ev = ControlEval::from_episodes(&eps).unwrap();
        let row = &ev.cost[&ControllerKind::Omniscient];
        let weighted: f64 = Season::ALL.iter().map(|s| row[s.name()] * 5.0 / 20.0).sum();
        assert!((row["Overall"] - weighted).abs() < 1e-12);
        assert!(ev.cost_normalized[&ControllerKind::Omniscient].values().all(|&v| v == 100.0));
        assert!((ev.cost_normalized[&ControllerKind::Stochastic]["Overall"] - 110.0).abs() < 1e-9);
        assert_eq!(ev.runtime_normalized.as_ref().unwrap()[&ControllerKind::Stochastic], 100.0);
        assert!(ev.to_csv().contains("cost_normalized,omniscient,100.0000"));
    }

    proptest! {
        #[test]
        fn cpi_invariant_under_monotone_maps(
            pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, 0.0f64..20.0), 1..40)
        ) {
            let y: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let lo: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let hi: Vec<f64> = pts.iter().map(|p| p.1 + p.2).collect();
            let f = |v: &Vec<f64>| v.iter().map(|x| x.exp2().ln_1p() + x * 3.0).collect::<Vec<f64>>();
            prop_assert_eq!(cpi(&y, &lo, &hi).unwrap(), cpi(&f(&y), &f(&lo), &f(&hi)).unwrap());
        }

        #[test]
        fn nmae_is_scale_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..40),
            c in 0.01f64..100.0,
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yh: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(a) = nmae(&y, &yh) {
                let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
                let yhs: Vec<f64> = yh.iter().map(|v| v * c).collect();
                let b = nmae(&ys, &yhs).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}

//! End-to-end steps behind the command-line tool.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! models/forecaster.json
//! episodes/<controller>_dayNNNN.{csv,json}
//! episodes/summary_<controller>.json
//! reports/forecast_metrics.{csv,json}, reports/forecast_plot.csv
//! reports/control_table.csv, reports/runtime_table.csv, reports/control_eval.json
//! reports/daily_plot.csv, reports/operation_plot_dayNNNN.csv
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, RunConfig};
use crate::error::{Error, Result};
use crate::forecast::forecaster::{HubForecaster, Target, TrainSplit};
use crate::metrics::{season_of, ControlEval, EpisodeSummary, ForecastEval, ForecastRecord};
use crate::mpc::{ControllerKind, MpcConfig};
use crate::sim::{run_days, EpisodeReport, SimContext};
use crate::timeseries::{day_hours, day_window, HOURS_PER_DAY, STEPS_PER_DAY};

pub const MODELS_DIR: &str = "models";
pub const EPISODES_DIR: &str = "episodes";
pub const REPORTS_DIR: &str = "reports";
pub const FORECASTER_FILE: &str = "forecaster.json";

pub fn forecaster_path(cfg: &RunConfig) -> PathBuf {
    cfg.output.dir.join(MODELS_DIR).join(FORECASTER_FILE)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Validated config plus its dataset.
pub struct Prepared {
    pub config: RunConfig,
    pub bundle: DatasetBundle,
}

pub fn prepare(config: RunConfig) -> Result<Prepared> {
    config.validate()?;
    let bundle = config.load_bundle()?;
    bundle.validate()?;
    config.test_days(&bundle)?;
    Ok(Prepared { config, bundle })
}

/// Chronological split of the days before the test period.
pub fn train_split(cfg: &RunConfig, n_days: usize) -> Result<TrainSplit> {
    let end = cfg.test_start_day(n_days)?;
    let start = cfg.forecast.history_days.map_or(0, |h| end.saturating_sub(h));
    TrainSplit::chronological(start..end, cfg.forecast.split)
}

pub fn train(p: &Prepared) -> Result<(HubForecaster, PathBuf)> {
    let split = train_split(&p.config, p.bundle.n_days())?;
    let params = p.config.forecast.enbpi(p.config.seed);
    let f = HubForecaster::train(&p.bundle, &p.config.site, &split, &params, p.config.execution)?;
    let path = forecaster_path(&p.config);
    f.save(&path)?;
    Ok((f, path))
}

pub fn load_forecaster(cfg: &RunConfig) -> Result<HubForecaster> {
    let path = forecaster_path(cfg);
    if !path.is_file() {
        return Err(Error::Artifact(format!("{} not found; run `train` first", path.display())));
    }
    HubForecaster::load(&path)
}

/// Day-ahead forecasts issued at midnight of each test day, scored against
/// the realized series.
pub fn forecast_records(p: &Prepared, f: &HubForecaster) -> Result<Vec<ForecastRecord>> {
    let days = p.config.test_days(&p.bundle)?;
    let b = &p.bundle;
    let per_day = p.config.execution.try_map(days.len(), |i| {
        let d = days[i];
        let set = f.forecast(b, day_window(d).start)?;
        let season = season_of(&b.calendar, d);
        let mut out = Vec::with_capacity(2 * STEPS_PER_DAY + HOURS_PER_DAY);
        for (target, band, observed) in [
            (Target::Ev, &set.ev, b.ev_power.slice(day_window(d))?),
            (Target::Pv, &set.pv, b.pv_power.slice(day_window(d))?),
            (Target::Price, &set.price, b.price.slice(day_hours(d))?),
        ] {
            for (h, &y) in observed.iter().enumerate() {
                out.push(ForecastRecord {
                    target,
                    day: d,
                    season,
                    horizon: h,
                    observed: y,
                    point: band.point[h],
                    lower: band.lower[h],
                    upper: band.upper[h],
                });
            }
        }
        Ok::<_, Error>(out)
    })?;
    Ok(per_day.into_iter().flatten().collect())
}

pub fn eval_forecasts(p: &Prepared) -> Result<ForecastEval> {
    let f = load_forecaster(&p.config)?;
    let records = forecast_records(p, &f)?;
    let eval = ForecastEval::from_records(&records, p.config.forecast.alpha)?;
    let dir = p.config.output.dir.join(REPORTS_DIR);
    write(&dir.join("forecast_metrics.csv"), &eval.to_csv())?;
    write(&dir.join("forecast_metrics.json"), &serde_json::to_string_pretty(&eval)?)?;
    let mut plot = String::from("target,day,horizon,observed,point,lower,upper\n");
    for r in &records {
        let _ = writeln!(plot, "{},{},{},{},{},{},{}", r.target.name(), r.day, r.horizon, r.observed, r.point, r.lower, r.upper);
    }
    write(&dir.join("forecast_plot.csv"), &plot)?;
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub controller: ControllerKind,
    pub days: Vec<usize>,
    pub total_cost: f64,
    pub total_emissions_kg: f64,
    pub mean_episode_seconds: f64,
    pub fallbacks: usize,
    pub clamps: usize,
    pub episode_files: Vec<PathBuf>,
}

/// Closed-loop runs of one controller over the test days, or the first
/// `max_days` of them.
pub fn simulate(p: &Prepared, kind: ControllerKind, max_days: Option<usize>) -> Result<SimulationSummary> {
    let mut days = p.config.test_days(&p.bundle)?;
    if let Some(n) = max_days {
        days.truncate(n);
    }
    let forecaster = if kind.needs_forecasts() { Some(load_forecaster(&p.config)?) } else { None };
    let params = p.config.battery.params()?;
    let ctx = SimContext {
        bundle: &p.bundle,
        forecaster: forecaster.as_ref(),
        params: &params,
        mpc: MpcConfig::default(),
        solver: p.config.solver.settings(),
    };
    let results = run_days(&[kind], &days, &ctx, p.config.execution)?;
    let dir = p.config.output.dir.join(EPISODES_DIR);
    let mut files = Vec::new();
    for r in &results {
        let (csv, json) = r.write(&dir)?;
        files.push(csv);
        files.push(json);
    }
    let n = results.len().max(1) as f64;
    let summary = SimulationSummary {
        controller: kind,
        days,
        total_cost: results.iter().map(|r| r.total_cost()).sum(),
        total_emissions_kg: results.iter().map(|r| r.total_emissions_kg()).sum(),
        mean_episode_seconds: results.iter().map(|r| r.runtime_seconds()).sum::<f64>() / n,
        fallbacks: results.iter().map(|r| r.fallbacks()).sum(),
        clamps: results.iter().map(|r| r.clamps()).sum(),
        episode_files: files,
    };
    write(&dir.join(format!("summary_{}.json", kind.name())), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Episode summaries found in the given files and directories.
pub fn collect_episode_reports(inputs: &[PathBuf]) -> Result<Vec<(PathBuf, EpisodeReport)>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = fs::read_dir(input).map_err(|e| Error::io(input, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(input, e))?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.ends_with(".json") && name.contains("_day") {
                    files.push(path);
                }
            }
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            return Err(Error::io(input, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")));
        }
    }
    files.sort();
    files.dedup();
    files
        .into_iter()
        .map(|path| {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let rep: EpisodeReport = serde_json::from_str(&text)
                .map_err(|e| Error::Data(format!("{}: not an episode summary ({e})", path.display())))?;
            Ok((path, rep))
        })
        .collect()
}

/// Controller tables and plot data from episode summaries.
pub fn report(inputs: &[PathBuf], out_dir: &Path) -> Result<ControlEval> {
    let reports = collect_episode_reports(inputs)?;
    if reports.is_empty() {
        return Err(Error::Data("no episode summaries found".into()));
    }
    let summaries: Vec<EpisodeSummary> = reports.iter().map(|(_, r)| r.summary.clone()).collect();
    let eval = ControlEval::from_episodes(&summaries)?;
    write(&out_dir.join("control_table.csv"), &eval.to_csv())?;
    write(&out_dir.join("runtime_table.csv"), &eval.runtime_csv())?;
    write(&out_dir.join("control_eval.json"), &serde_json::to_string_pretty(&eval)?)?;

    let mut daily = String::from("controller,day,season,cost_eur,emissions_kg,runtime_seconds,fallbacks\n");
    for s in &summaries {
        let _ = writeln!(
            daily,
            "{},{},{},{},{},{},{}",
            s.controller.name(),
            s.day,
            s.season.name(),
            s.cost,
            s.emissions_kg,
            s.runtime_seconds,
            s.fallbacks
        );
    }
    write(&out_dir.join("daily_plot.csv"), &daily)?;

    // Operation traces for the first day every controller covers.
    let mut by_day: BTreeMap<usize, Vec<(ControllerKind, PathBuf)>> = BTreeMap::new();
    for (path, r) in &reports {
        by_day.entry(r.summary.day).or_default().push((r.summary.controller, path.with_extension("csv")));
    }
    let n_kinds = eval.cost.len();
    if let Some((day, runs)) = by_day.into_iter().find(|(_, v)| v.len() == n_kinds) {
        let mut plot = String::from("controller,step,e_b_kwh,p_b_kw,p_g_kw,p_ev_kw,p_pv_kw,price_eur_per_kw_step\n");
        for (kind, csv) in runs {
            if !csv.is_file() {
                continue;
            }
            let mut rdr = csv::Reader::from_path(&csv)?;
            let headers = rdr.headers()?.clone();
            let col = |name: &str| headers.iter().position(|h| h == name);
            let cols: Vec<Option<usize>> =
                ["step", "e_b_kwh", "p_b_kw", "p_g_kw", "p_ev_kw", "p_pv_kw", "price_eur_per_kw_step"].iter().map(|c| col(c)).collect();
            for rec in rdr.records() {
                let rec = rec?;
                let vals: Vec<&str> = cols.iter().map(|c| c.and_then(|i| rec.get(i)).unwrap_or("")).collect();
                let _ = writeln!(plot, "{},{}", kind.name(), vals.join(","));
            }
        }
        write(&out_dir.join(format!("operation_plot_day{day:04}.csv")), &plot)?;
    }
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path) -> RunConfig {
        let mut c = RunConfig::from_toml(
            "[data]\nsynthetic_days = 16\n[forecast]\nestimators = 10\nmax_rounds = 15\n[evaluation]\ntest_start_day = 12\ndays_per_season = 2\n",
        )
        .unwrap();
        c.output.dir = dir.to_path_buf();
        c
    }

    #[test]
    fn split_honours_history_limit() {
        let mut c = RunConfig::from_toml("[data]\nsynthetic_days = 30\n").unwrap();
        assert_eq!(train_split(&c, 30).unwrap().train.start, 1);
        c.forecast.history_days = Some(12);
        let s = train_split(&c, 30).unwrap();
        assert_eq!(s.train.start, 8);
        assert_eq!(s.calibration.end, 20);
    }

    #[test]
    fn train_then_evaluate_then_simulate() {
        let dir = tempfile::tempdir().unwrap();
        let p = prepare(config(dir.path())).unwrap();
        assert!(matches!(eval_forecasts(&p), Err(Error::Artifact(_))));
        let (_, path) = train(&p).unwrap();
        assert!(path.is_file());
        let eval = eval_forecasts(&p).unwrap();
        assert_eq!(eval.targets.len(), 3);
        assert!(dir.path().join("reports/forecast_plot.csv").is_file());
        let s = simulate(&p, ControllerKind::Omniscient, Some(1)).unwrap();
        assert_eq!(s.days.len(), 1);
        assert_eq!(s.fallbacks, 0);
        let eval = report(&[dir.path().join(EPISODES_DIR)], &dir.path().join(REPORTS_DIR)).unwrap();
        assert_eq!(eval.cost_normalized[&ControllerKind::Omniscient]["Overall"], 100.0);
    }
}

//! Closed-loop simulation on realized data.
//!
//! The plant applies each committed battery power to the exact (nonconvex)
//! loss model, so any gap between plan and outcome comes from forecast
//! error or from the relaxation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::error::{contract, Error, Result};
use crate::exec::Execution;
use crate::forecast::forecaster::{ForecastSet, HubForecaster};
use crate::forecast::scenario::{omniscient_tree, realized_quarter_price};
use crate::hub::{
    exact_grid_cost, exact_internal_power, external_power, short_circuit_cap, step_battery, BatteryParams,
    BatteryState, PricePair,
};
use crate::metrics::{season_of, EpisodeSummary, Season};
use crate::mpc::{plan, ControllerKind, MpcConfig, MpcPlan};
use crate::solver::SolverSettings;
use crate::timeseries::{Episode, STEPS_PER_DAY, STEP_HOURS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampKind {
    /// Requested discharge above `p_sc / 4`, where no internal power exists.
    RootExistence,
    /// Discharge would take energy below `e_min`.
    EnergyLow,
    /// Charge would take energy above `e_max`.
    EnergyHigh,
    /// Floating-point overshoot of an energy limit.
    Rounding,
}

impl ClampKind {
    pub fn name(self) -> &'static str {
        match self {
            ClampKind::RootExistence => "root_existence",
            ClampKind::EnergyLow => "energy_low",
            ClampKind::EnergyHigh => "energy_high",
            ClampKind::Rounding => "rounding",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub battery: BatteryState,
    pub step_in_episode: usize,
    pub episode: Episode,
}

impl PlantState {
    pub fn start(episode: Episode, params: &BatteryParams) -> Self {
        PlantState { battery: BatteryState { e_b: params.e_init }, step_in_episode: 0, episode }
    }
}

/// Realized exogenous values for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub p_ev: f64,
    pub p_pv: f64,
    pub prices: PricePair,
    /// g/kWh
    pub carbon_intensity: f64,
}

impl Observation {
    pub fn at(b: &DatasetBundle, t: usize) -> Result<Self> {
        Ok(Observation {
            p_ev: b.ev_power.at(t)?,
            p_pv: b.pv_power.at(t)?,
            prices: PricePair::symmetric(realized_quarter_price(b, t)?),
            carbon_intensity: b.carbon_intensity.at(t)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub p_ev: f64,
    pub p_pv: f64,
    /// EUR per kW held over the step.
    pub price: f64,
    pub carbon_intensity: f64,
    pub p_b_requested: f64,
    pub p_b: f64,
    pub p_ib: f64,
    pub e_b_before: f64,
    pub e_b: f64,
    pub p_g: f64,
    /// EUR
    pub cost: f64,
    pub emissions_kg: f64,
    pub clamp: Option<ClampKind>,
    pub fallback: bool,
    pub planned_objective: f64,
    pub n_scenarios: usize,
    pub nonanticipativity_spread: f64,
    pub periodicity_error: f64,
    pub cone_gap: f64,
    pub epigraph_gap: f64,
    pub forecast_seconds: f64,
    pub plan_seconds: f64,
}

/// Applies a requested battery power to the exact plant model.
pub fn apply(
    state: PlantState,
    p_b_star: f64,
    obs: &Observation,
    params: &BatteryParams,
) -> Result<(PlantState, StepRecord)> {
    let e = state.battery.e_b;
    let cap = short_circuit_cap(e, params)?;
    let mut clamp = None;
    let mut p_b = if p_b_star.is_finite() { p_b_star } else { 0.0 };
    if p_b > cap / 4.0 {
        clamp = Some(ClampKind::RootExistence);
        p_b = cap / 4.0;
    }
    let mut p_ib = exact_internal_power(p_b, cap)?;
    let e_next = step_battery(state.battery, p_ib).e_b;
    if e_next < params.e_min {
        clamp = Some(ClampKind::EnergyLow);
        p_b = external_power((e - params.e_min) / STEP_HOURS, cap);
        p_ib = exact_internal_power(p_b, cap)?;
    } else if e_next > params.e_max {
        clamp = Some(ClampKind::EnergyHigh);
        p_b = external_power((e - params.e_max) / STEP_HOURS, cap);
        p_ib = exact_internal_power(p_b, cap)?;
    }
    let mut e_b = step_battery(state.battery, p_ib).e_b;
    if e_b < params.e_min || e_b > params.e_max {
        clamp = clamp.or(Some(ClampKind::Rounding));
        e_b = e_b.clamp(params.e_min, params.e_max);
    }
    if let Some(kind) = clamp {
        log::warn!(
            "day {} step {}: battery power clamped ({}) from {p_b_star} kW to {p_b} kW",
            state.episode.day_index,
            state.step_in_episode,
            kind.name()
        );
    }
    let p_g = obs.p_ev - obs.p_pv - p_b;
    let record = StepRecord {
        step: state.step_in_episode,
        p_ev: obs.p_ev,
        p_pv: obs.p_pv,
        price: obs.prices.buy,
        carbon_intensity: obs.carbon_intensity,
        p_b_requested: p_b_star,
        p_b,
        p_ib,
        e_b_before: e,
        e_b,
        p_g,
        cost: exact_grid_cost(p_g, obs.prices),
        emissions_kg: STEP_HOURS * p_g * obs.carbon_intensity / 1000.0,
        clamp,
        fallback: false,
        planned_objective: f64::NAN,
        n_scenarios: 0,
        nonanticipativity_spread: 0.0,
        periodicity_error: 0.0,
        cone_gap: 0.0,
        epigraph_gap: 0.0,
        forecast_seconds: 0.0,
        plan_seconds: 0.0,
    };
    let next = PlantState {
        battery: BatteryState { e_b },
        step_in_episode: state.step_in_episode + 1,
        episode: state.episode,
    };
    Ok((next, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub controller: ControllerKind,
    pub day: usize,
    pub date: String,
    pub season: Season,
    pub steps: Vec<StepRecord>,
}

/// Per-episode JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    #[serde(flatten)]
    pub summary: EpisodeSummary,
    pub date: String,
    pub forecast_seconds: f64,
    pub plan_seconds: f64,
    pub clamps: usize,
    pub planned_objective_first: f64,
    pub max_nonanticipativity_spread: f64,
    pub max_periodicity_error: f64,
    pub max_cone_gap: f64,
    pub max_epigraph_gap: f64,
    pub final_e_b: f64,
}

const CSV_HEADER: &str = "step,p_ev_kw,p_pv_kw,price_eur_per_kw_step,carbon_intensity_g_kwh,p_b_requested_kw,p_b_kw,p_ib_kw,e_b_before_kwh,e_b_kwh,p_g_kw,cost_eur,emissions_kg,clamp,fallback,planned_objective_eur,n_scenarios,nonanticipativity_spread,periodicity_error_kwh,cone_gap,epigraph_gap,forecast_seconds,plan_seconds";

impl EpisodeResult {
    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }

    pub fn total_emissions_kg(&self) -> f64 {
        self.steps.iter().map(|s| s.emissions_kg).sum()
    }

    pub fn fallbacks(&self) -> usize {
        self.steps.iter().filter(|s| s.fallback).count()
    }

    pub fn clamps(&self) -> usize {
        self.steps.iter().filter(|s| s.clamp.is_some()).count()
    }

    pub fn runtime_seconds(&self) -> f64 {
        self.steps.iter().map(|s| s.forecast_seconds + s.plan_seconds).sum()
    }

    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            controller: self.controller,
            day: self.day,
            season: self.season,
            cost: self.total_cost(),
            emissions_kg: self.total_emissions_kg(),
            runtime_seconds: self.runtime_seconds(),
            fallbacks: self.fallbacks(),
        }
    }

    pub fn report(&self) -> EpisodeReport {
        let max = |f: fn(&StepRecord) -> f64| self.steps.iter().map(f).fold(0.0, f64::max);
        EpisodeReport {
            summary: self.summary(),
            date: self.date.clone(),
            forecast_seconds: self.steps.iter().map(|s| s.forecast_seconds).sum(),
            plan_seconds: self.steps.iter().map(|s| s.plan_seconds).sum(),
            clamps: self.clamps(),
            planned_objective_first: self.steps.first().map_or(f64::NAN, |s| s.planned_objective),
            max_nonanticipativity_spread: max(|s| s.nonanticipativity_spread),
            max_periodicity_error: max(|s| s.periodicity_error),
            max_cone_gap: max(|s| s.cone_gap),
            max_epigraph_gap: max(|s| s.epigraph_gap),
            final_e_b: self.steps.last().map_or(f64::NAN, |s| s.e_b),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.step,
                s.p_ev,
                s.p_pv,
                s.price,
                s.carbon_intensity,
                s.p_b_requested,
                s.p_b,
                s.p_ib,
                s.e_b_before,
                s.e_b,
                s.p_g,
                s.cost,
                s.emissions_kg,
                s.clamp.map_or("", ClampKind::name),
                s.fallback,
                s.planned_objective,
                s.n_scenarios,
                s.nonanticipativity_spread,
                s.periodicity_error,
                s.cone_gap,
                s.epigraph_gap,
                s.forecast_seconds,
                s.plan_seconds
            );
        }
        out
    }

    pub fn file_stem(&self) -> String {
        format!("{}_day{:04}", self.controller.name(), self.day)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{}.csv", self.file_stem()));
        let json = dir.join(format!("{}.json", self.file_stem()));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        fs::write(&json, serde_json::to_string_pretty(&self.report())?).map_err(|e| Error::io(&json, e))?;
        Ok((csv, json))
    }
}

/// Everything an episode needs besides the controller and the day.
#[derive(Debug, Clone, Copy)]
pub struct SimContext<'a> {
    pub bundle: &'a DatasetBundle,
    pub forecaster: Option<&'a HubForecaster>,
    pub params: &'a BatteryParams,
    pub mpc: MpcConfig,
    pub solver: SolverSettings,
}

impl SimContext<'_> {
    fn check_day(&self, d: usize) -> Result<()> {
        if (d + 2) * STEPS_PER_DAY > self.bundle.n_steps() {
            return Err(contract(format!(
                "day {d} needs the following day for its windows, data has {} days",
                self.bundle.n_days()
            )));
        }
        Ok(())
    }
}

fn plan_step(
    kind: ControllerKind,
    ctx: &SimContext,
    state: PlantState,
    t: usize,
    forecast: Option<&ForecastSet>,
) -> Result<(MpcPlan, f64)> {
    let (tree, forecast_seconds) = match (kind, forecast) {
        (ControllerKind::Omniscient, _) => (omniscient_tree(ctx.bundle, t)?, 0.0),
        (ControllerKind::Deterministic, Some(f)) => (f.point_tree()?, f.seconds),
        (_, Some(f)) => (f.scenario_tree()?, f.seconds),
        (_, None) => return Err(contract(format!("{kind} control needs forecasts"))),
    };
    let p = plan(kind, &tree, state.battery, state.step_in_episode, ctx.params, &ctx.mpc, &ctx.solver)?;
    Ok((p, forecast_seconds))
}

/// Runs one daily episode. `forecasts` holds the sets issued at each step
/// of the day; when absent they are computed with the context forecaster.
pub fn run_episode(
    kind: ControllerKind,
    d: usize,
    ctx: &SimContext,
    forecasts: Option<&[ForecastSet]>,
) -> Result<EpisodeResult> {
    ctx.check_day(d)?;
    let episode = Episode::new(d);
    let owned;
    let forecasts = match (kind.needs_forecasts(), forecasts) {
        (false, _) => None,
        (true, Some(f)) => Some(f),
        (true, None) => {
            let fc = ctx.forecaster.ok_or_else(|| contract(format!("{kind} control needs a trained forecaster")))?;
            owned = fc.forecast_day(ctx.bundle, d, Execution::Sequential)?;
            Some(owned.as_slice())
        }
    };
    if let Some(f) = forecasts {
        if f.len() != STEPS_PER_DAY || f[0].issued_at != episode.first_step {
            return Err(contract(format!("forecasts do not cover day {d}")));
        }
    }
    let mut state = PlantState::start(episode, ctx.params);
    let mut steps = Vec::with_capacity(STEPS_PER_DAY);
    for (i, t) in episode.steps().enumerate() {
        let (p, forecast_seconds) = plan_step(kind, ctx, state, t, forecasts.map(|f| &f[i]))?;
        let obs = Observation::at(ctx.bundle, t)?;
        let (next, mut rec) = apply(state, p.committed_p_b, &obs, ctx.params)?;
        rec.fallback = p.is_fallback();
        rec.planned_objective = p.objective;
        rec.n_scenarios = p.probabilities.len();
        if !p.is_fallback() {
            rec.nonanticipativity_spread = p.nonanticipativity_spread();
            rec.periodicity_error = p.periodicity_error().unwrap_or(0.0);
            rec.cone_gap = p.cone_gap(0);
            rec.epigraph_gap = p.epigraph_gap(0);
        }
        rec.forecast_seconds = forecast_seconds;
        rec.plan_seconds = p.seconds;
        steps.push(rec);
        state = next;
    }
    Ok(EpisodeResult {
        controller: kind,
        day: d,
        date: ctx.bundle.calendar.date_of_day(d).to_string(),
        season: season_of(&ctx.bundle.calendar, d),
        steps,
    })
}

/// Runs every controller on every day. Forecasts for a day are computed
/// once and shared by the forecasting controllers; each of them is charged
/// the forecast time. Days run through `exec`; results come back ordered
/// by day, then by the order of `kinds`.
pub fn run_days(
    kinds: &[ControllerKind],
    days: &[usize],
    ctx: &SimContext,
    exec: Execution,
) -> Result<Vec<EpisodeResult>> {
    for &d in days {
        ctx.check_day(d)?;
    }
    let needs = kinds.iter().any(|k| k.needs_forecasts());
    if needs && ctx.forecaster.is_none() {
        return Err(contract("forecasting controllers need a trained forecaster"));
    }
    let per_day = exec.try_map(days.len(), |i| {
        let d = days[i];
        let forecasts = match ctx.forecaster {
            Some(fc) if needs => Some(fc.forecast_day(ctx.bundle, d, Execution::Sequential)?),
            _ => None,
        };
        kinds
            .iter()
            .map(|&k| {
                let r = run_episode(k, d, ctx, forecasts.as_deref())?;
                log::info!("{} day {d}: cost {:.3} EUR, {:.1} s", k.name(), r.total_cost(), r.runtime_seconds());
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_day.into_iter().flatten().collect())
}

//! Scenario-based model predictive control of the hub battery.
//!
//! Every controller variant compiles to the same second-order cone program;
//! they differ only in the scenario tree they are fed and in which
//! internal-power columns are shared between scenarios.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::forecast::scenario::ScenarioTree;
use crate::hub::{cone_row, external_power, short_circuit_cap, BatteryParams, BatteryState};
use crate::solver::{AffineExpr, ConicProgram, ConicSolver, LinearRow, SocBlock, SolverSettings};
use crate::timeseries::{STEPS_PER_DAY, STEP_HOURS};

/// Battery power below which a step counts as idle for tightness checks, kW.
pub const IDLE_POWER_KW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Omniscient,
    Deterministic,
    Stochastic,
    Recourse,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Omniscient,
        ControllerKind::Deterministic,
        ControllerKind::Stochastic,
        ControllerKind::Recourse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Omniscient => "omniscient",
            ControllerKind::Deterministic => "deterministic",
            ControllerKind::Stochastic => "stochastic",
            ControllerKind::Recourse => "recourse",
        }
    }

    /// Single-branch variants.
    pub fn is_single_scenario(self) -> bool {
        matches!(self, ControllerKind::Omniscient | ControllerKind::Deterministic)
    }

    pub fn needs_forecasts(self) -> bool {
        self != ControllerKind::Omniscient
    }

    /// Whether window step `i` shares one internal-power column across
    /// scenarios.
    pub fn shares_step(self, i: usize) -> bool {
        match self {
            ControllerKind::Recourse => i == 0,
            _ => true,
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown controller {s:?}; expected one of omniscient, deterministic, stochastic, recourse")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Episode length in steps; the terminal energy condition sits at the
    /// episode end inside each window.
    pub episode_steps: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig { episode_steps: STEPS_PER_DAY }
    }
}

/// Variable indices, `[scenario][step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub p_ib: Vec<Vec<usize>>,
    pub p_b: Vec<Vec<usize>>,
    pub p_g: Vec<Vec<usize>>,
    pub e_b: Vec<Vec<usize>>,
    pub p_sc: Vec<Vec<usize>>,
    pub c_el: Vec<Vec<usize>>,
    /// Window index whose end-of-step energy must equal the episode start.
    pub terminal: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub kind: ControllerKind,
    pub program: ConicProgram,
    pub layout: Layout,
    /// The tree after merging identical branches.
    pub tree: ScenarioTree,
    pub e0: f64,
    pub e_target: f64,
    /// Short-circuit power cap at the anchor state.
    pub cap0: f64,
}

/// Lowest external power the battery can take, reached when charging at
/// the internal-power bound with the smallest envelope value.
fn p_b_floor(params: &BatteryParams) -> Result<f64> {
    let cap_min = short_circuit_cap(params.e_min, params)?.min(short_circuit_cap(params.e_max, params)?);
    Ok(external_power(-params.p_ib_bound, cap_min))
}

/// Builds the program for one receding-horizon step.
pub fn assemble_problem(
    tree: &ScenarioTree,
    state: BatteryState,
    kind: ControllerKind,
    k_in_episode: usize,
    params: &BatteryParams,
    config: &MpcConfig,
) -> Result<MpcProblem> {
    tree.validate()?;
    params.validate()?;
    if k_in_episode >= config.episode_steps {
        return Err(contract(format!("step {k_in_episode} outside a {}-step episode", config.episode_steps)));
    }
    let tree = tree.merge_duplicates();
    if kind.is_single_scenario() && tree.n_branches() != 1 {
        return Err(contract(format!("{kind} control takes one branch, got {}", tree.n_branches())));
    }
    let e0 = state.e_b;
    let cap0 = short_circuit_cap(e0, params)
        .map_err(|e| Error::Contract(format!("anchor state infeasible: {e}")))?;
    let n_s = tree.n_branches();
    let n_w = tree.horizon();
    let i_star = config.episode_steps - k_in_episode;
    let terminal = (i_star <= n_w).then(|| i_star - 1);
    // With positive prices the cost already pushes P_b up; the floor only
    // keeps the program bounded when some price is zero or negative.
    let b_floor = if tree.branches.iter().all(|b| b.buy.iter().chain(&b.sell).all(|&p| p > 0.0)) {
        f64::NEG_INFINITY
    } else {
        p_b_floor(params)?
    };

    let mut next = 0usize;
    let mut alloc = || {
        next += 1;
        next - 1
    };
    let shared: Vec<Option<usize>> = (0..n_w).map(|i| kind.shares_step(i).then(&mut alloc)).collect();
    let mut layout = Layout {
        p_ib: vec![Vec::with_capacity(n_w); n_s],
        p_b: vec![Vec::with_capacity(n_w); n_s],
        p_g: vec![Vec::with_capacity(n_w); n_s],
        e_b: vec![Vec::with_capacity(n_w); n_s],
        p_sc: vec![Vec::with_capacity(n_w); n_s],
        c_el: vec![Vec::with_capacity(n_w); n_s],
        terminal,
    };
    for s in 0..n_s {
        for sh in &shared {
            layout.p_ib[s].push(sh.unwrap_or_else(&mut alloc));
            layout.p_b[s].push(alloc());
            layout.p_g[s].push(alloc());
            layout.e_b[s].push(alloc());
            layout.p_sc[s].push(alloc());
            layout.c_el[s].push(alloc());
        }
    }

    let mut prog = ConicProgram::new(next);
    for s in 0..n_s {
        let branch = &tree.branches[s];
        let rho = tree.probabilities[s];
        for i in 0..n_w {
            let (pib, pb, pg) = (layout.p_ib[s][i], layout.p_b[s][i], layout.p_g[s][i]);
            let (e, psc, c) = (layout.e_b[s][i], layout.p_sc[s][i], layout.c_el[s][i]);
            prog.bounds[pib] = (-params.p_ib_bound, params.p_ib_bound);
            prog.bounds[pb] = (b_floor, f64::INFINITY);
            prog.bounds[e] = (params.e_min, params.e_max);

            // P_ev = P_g + P_pv + P_b
            prog.eq_rows.push(LinearRow::new(vec![(pg, 1.0), (pb, 1.0)], branch.ev[i] - branch.pv[i]));

            // E_b[i] = E_b[i-1] - dT * P_ib[i]
            if i == 0 {
                prog.eq_rows.push(LinearRow::new(vec![(e, 1.0), (pib, STEP_HOURS)], e0));
                prog.bounds[psc] = (f64::NEG_INFINITY, cap0);
            } else {
                let prev = layout.e_b[s][i - 1];
                prog.eq_rows.push(LinearRow::new(vec![(e, 1.0), (pib, STEP_HOURS), (prev, -1.0)], 0.0));
                for sp in &params.splines {
                    prog.ineq_rows.push(LinearRow::new(vec![(psc, 1.0), (prev, -sp.a)], sp.b));
                }
            }

            // ||(2 P_ib, P_ib - P_b - P_sc)|| <= P_ib - P_b + P_sc, which also
            // forces P_sc >= 0.
            prog.soc_blocks.push(SocBlock {
                t: AffineExpr::new(vec![(pib, 1.0), (pb, -1.0), (psc, 1.0)], 0.0),
                x: vec![
                    AffineExpr::new(vec![(pib, 2.0)], 0.0),
                    AffineExpr::new(vec![(pib, 1.0), (pb, -1.0), (psc, -1.0)], 0.0),
                ],
            });

            // C_el >= buy * P_g, C_el >= sell * P_g
            prog.ineq_rows.push(LinearRow::new(vec![(pg, branch.buy[i]), (c, -1.0)], 0.0));
            if branch.sell[i] != branch.buy[i] {
                prog.ineq_rows.push(LinearRow::new(vec![(pg, branch.sell[i]), (c, -1.0)], 0.0));
            }
            prog.objective[c] += rho;
        }
        if let Some(t) = terminal {
            prog.eq_rows.push(LinearRow::new(vec![(layout.e_b[s][t], 1.0)], params.e_init));
        }
    }
    prog.validate()?;
    Ok(MpcProblem { kind, program: prog, layout, tree, e0, e_target: params.e_init, cap0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Optimal,
    /// The solver did not return an optimal point; the idle action is used.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcPlan {
    pub kind: ControllerKind,
    pub status: PlanStatus,
    pub committed_p_ib: f64,
    pub committed_p_b: f64,
    /// EUR, probability-weighted.
    pub objective: f64,
    /// `[scenario][step]`; empty for fallback plans.
    pub p_ib: Vec<Vec<f64>>,
    pub p_b: Vec<Vec<f64>>,
    pub p_g: Vec<Vec<f64>>,
    pub e_b: Vec<Vec<f64>>,
    pub p_sc: Vec<Vec<f64>>,
    pub c_el: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
    pub buy: Vec<Vec<f64>>,
    pub sell: Vec<Vec<f64>>,
    pub terminal: Option<usize>,
    pub e_target: f64,
    pub iterations: u32,
    /// Assembly plus solve wall time.
    pub seconds: f64,
    pub detail: String,
}

impl MpcPlan {
    fn fallback(problem: &MpcProblem, seconds: f64, iterations: u32, detail: String) -> Self {
        MpcPlan {
            kind: problem.kind,
            status: PlanStatus::Fallback,
            committed_p_ib: 0.0,
            committed_p_b: 0.0,
            objective: f64::NAN,
            p_ib: Vec::new(),
            p_b: Vec::new(),
            p_g: Vec::new(),
            e_b: Vec::new(),
            p_sc: Vec::new(),
            c_el: Vec::new(),
            probabilities: problem.tree.probabilities.clone(),
            buy: Vec::new(),
            sell: Vec::new(),
            terminal: problem.layout.terminal,
            e_target: problem.e_target,
            iterations,
            seconds,
            detail,
        }
    }

    pub fn is_fallback(&self) -> bool {
        self.status == PlanStatus::Fallback
    }

    pub fn n_scenarios(&self) -> usize {
        self.p_ib.len()
    }

    /// Largest disagreement of internal power between scenarios over the
    /// steps this variant shares.
    pub fn nonanticipativity_spread(&self) -> f64 {
        let horizon = self.p_ib.first().map_or(0, Vec::len);
        let mut spread: f64 = 0.0;
        for i in (0..horizon).filter(|&i| self.kind.shares_step(i)) {
            let (lo, hi) = self
                .p_ib
                .iter()
                .map(|row| row[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            spread = spread.max(hi - lo);
        }
        spread
    }

    /// Largest distance of the end-of-episode energy from its target, kWh.
    pub fn periodicity_error(&self) -> Option<f64> {
        let t = self.terminal?;
        self.e_b.iter().map(|row| (row[t] - self.e_target).abs()).reduce(f64::max)
    }

    /// Largest cone slack at step `i` over scenarios where the battery
    /// moves more than [`IDLE_POWER_KW`].
    pub fn cone_gap(&self, i: usize) -> f64 {
        (0..self.n_scenarios())
            .filter(|&s| self.p_b[s][i].abs() > IDLE_POWER_KW)
            .map(|s| cone_row(self.p_ib[s][i], self.p_b[s][i], self.p_sc[s][i]).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `C_el - max(buy P_g, sell P_g)` magnitude at step `i`.
    pub fn epigraph_gap(&self, i: usize) -> f64 {
        (0..self.n_scenarios())
            .filter(|&s| self.probabilities[s] > 0.0)
            .map(|s| {
                let pg = self.p_g[s][i];
                (self.c_el[s][i] - (self.buy[s][i] * pg).max(self.sell[s][i] * pg)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Regularization of the second attempt when the first solve is not
/// accepted: the solver's stock value.
const RETRY_REGULARIZATION: f64 = 1e-8;

/// Solves one step and extracts the committed action. A solve that is not
/// accepted is retried once with different regularization; if that also
/// fails the plan idles the battery.
pub fn plan(
    kind: ControllerKind,
    tree: &ScenarioTree,
    state: BatteryState,
    k_in_episode: usize,
    params: &BatteryParams,
    config: &MpcConfig,
    settings: &SolverSettings,
) -> Result<MpcPlan> {
    let started = Instant::now();
    let problem = assemble_problem(tree, state, kind, k_in_episode, params, config)?;
    let mut sol = ConicSolver::new(*settings).solve(&problem.program)?;
    if !sol.is_optimal() && settings.regularization != RETRY_REGULARIZATION {
        log::debug!("{kind} plan at step {k_in_episode}: {}; retrying with stock regularization", sol.detail);
        let retry = SolverSettings { regularization: RETRY_REGULARIZATION, ..*settings };
        let first_iterations = sol.iterations;
        sol = ConicSolver::new(retry).solve(&problem.program)?;
        sol.iterations += first_iterations;
    }
    let seconds = started.elapsed().as_secs_f64();
    if !sol.is_optimal() {
        log::warn!(
            "{kind} plan at step {k_in_episode} not optimal ({:?}: {}); committing the idle action",
            sol.status,
            sol.detail
        );
        return Ok(MpcPlan::fallback(&problem, seconds, sol.iterations, sol.detail));
    }
    let x = &sol.primal;
    let pick = |idx: &Vec<Vec<usize>>| -> Vec<Vec<f64>> {
        idx.iter().map(|row| row.iter().map(|&j| x[j]).collect()).collect()
    };
    let l = &problem.layout;
    let committed_p_ib = x[l.p_ib[0][0]];
    Ok(MpcPlan {
        kind,
        status: PlanStatus::Optimal,
        committed_p_ib,
        committed_p_b: external_power(committed_p_ib, problem.cap0),
        objective: sol.objective_value,
        p_ib: pick(&l.p_ib),
        p_b: pick(&l.p_b),
        p_g: pick(&l.p_g),
        e_b: pick(&l.e_b),
        p_sc: pick(&l.p_sc),
        c_el: pick(&l.c_el),
        probabilities: problem.tree.probabilities.clone(),
        buy: problem.tree.branches.iter().map(|b| b.buy.clone()).collect(),
        sell: problem.tree.branches.iter().map(|b| b.sell.clone()).collect(),
        terminal: l.terminal,
        e_target: problem.e_target,
        iterations: sol.iterations,
        seconds,
        detail: sol.detail,
    })
}

//! Second-order cone programs and their solution.
//!
//! A [`ConicProgram`] is a linear objective over bounded variables with
//! linear equality rows, `<=` rows and second-order cone memberships
//! `t >= ||x||_2` where `t` and every entry of `x` are affine expressions.
//! [`ConicSolver`] hands the program to Clarabel (a primal-dual
//! interior-point method on the homogeneous embedding with Ruiz
//! equilibration) and checks the returned point against the program itself
//! before reporting it as optimal.

mod dump;

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

pub use dump::{read_program, write_program};

/// `sum coeff * x[var] + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        AffineExpr { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>() + self.constant
    }
}

/// `coeffs . x  (= or <=)  rhs`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        LinearRow { coeffs, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, c)| c * x[j]).sum()
    }
}

/// `t >= ||x||_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocBlock {
    pub t: AffineExpr,
    pub x: Vec<AffineExpr>,
}

impl SocBlock {
    /// `t - ||x||`; non-negative iff the point is inside the cone.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let norm = self.x.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        self.t.eval(x) - norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    pub eq_rows: Vec<LinearRow>,
    pub ineq_rows: Vec<LinearRow>,
    pub soc_blocks: Vec<SocBlock>,
    /// Per-variable `(lower, upper)`; infinite entries are unbounded.
    pub bounds: Vec<(f64, f64)>,
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        ConicProgram {
            objective: vec![0.0; n_vars],
            eq_rows: Vec::new(),
            ineq_rows: Vec::new(),
            soc_blocks: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.bounds.len() != n {
            return Err(contract(format!("{} bounds for {n} variables", self.bounds.len())));
        }
        let in_range = |terms: &[(usize, f64)]| terms.iter().all(|&(j, c)| j < n && c.is_finite());
        for (i, r) in self.eq_rows.iter().chain(&self.ineq_rows).enumerate() {
            if !in_range(&r.coeffs) || !r.rhs.is_finite() {
                return Err(contract(format!("linear row {i} has an invalid entry")));
            }
        }
        for (i, b) in self.soc_blocks.iter().enumerate() {
            if b.x.is_empty() {
                return Err(contract(format!("cone block {i} has no vector part")));
            }
            let ok = std::iter::once(&b.t)
                .chain(&b.x)
                .all(|e| in_range(&e.terms) && e.constant.is_finite());
            if !ok {
                return Err(contract(format!("cone block {i} has an invalid entry")));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY || lo.is_nan() || hi.is_nan() {
                return Err(contract(format!("variable {j} has empty bounds [{lo}, {hi}]")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(contract("objective has a non-finite coefficient"));
        }
        Ok(())
    }

    /// Feasibility residuals of `x` against this program.
    pub fn residuals(&self, x: &[f64]) -> Residuals {
        let eq_max = self
            .eq_rows
            .iter()
            .map(|r| (r.lhs(x) - r.rhs).abs())
            .fold(0.0, f64::max);
        let bound_min = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (v - lo).min(hi - v))
            .fold(f64::INFINITY, f64::min);
        let ineq_min = self
            .ineq_rows
            .iter()
            .map(|r| r.rhs - r.lhs(x))
            .fold(bound_min, f64::min);
        let cone_min = self
            .soc_blocks
            .iter()
            .map(|b| b.residual(x))
            .fold(f64::INFINITY, f64::min);
        Residuals { eq_max, ineq_min, cone_min, gap: f64::NAN }
    }

    /// Largest finite right-hand side or bound magnitude.
    fn data_norm(&self) -> f64 {
        let rows = self.eq_rows.iter().chain(&self.ineq_rows).map(|r| r.rhs.abs());
        let bounds = self.bounds.iter().flat_map(|&(lo, hi)| [lo.abs(), hi.abs()]).filter(|v| v.is_finite());
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Largest equality violation.
    pub eq_max: f64,
    /// Smallest `rhs - lhs` over inequality rows and bounds (negative = violated).
    pub ineq_min: f64,
    /// Smallest cone residual (negative = outside).
    pub cone_min: f64,
    /// Absolute primal-dual gap reported by the interior-point method.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective_value: f64,
    pub iterations: u32,
    pub solve_seconds: f64,
    pub residuals: Residuals,
    /// Free-form note; carries the solver's own status for non-optimal exits.
    pub detail: String,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: u32,
    pub equilibrate: bool,
    /// Static regularization of the KKT factorization.
    pub regularization: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: 1e-6, max_iter: 200, equilibrate: true, regularization: 1e-11 }
    }
}

/// Stateless and `Sync`: one instance can serve many threads.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConicSolver {
    pub settings: SolverSettings,
}

impl ConicSolver {
    pub fn new(settings: SolverSettings) -> Self {
        ConicSolver { settings }
    }

    pub fn with_tol(tol: f64) -> Self {
        ConicSolver { settings: SolverSettings { tol, ..SolverSettings::default() } }
    }

    pub fn solve(&self, program: &ConicProgram) -> Result<Solution> {
        solve(program, &self.settings)
    }
}

/// Solves `program` at tolerance `tol` with default settings otherwise.
pub fn solve_with_tol(program: &ConicProgram, tol: f64) -> Result<Solution> {
    ConicSolver::with_tol(tol).solve(program)
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Triplets {
    fn push_row(&mut self, terms: &[(usize, f64)], scale: f64, b: f64) {
        let row = self.b.len();
        for &(j, c) in terms {
            if c != 0.0 {
                self.rows.push(row);
                self.cols.push(j);
                self.vals.push(scale * c);
            }
        }
        self.b.push(b);
    }
}

fn solve(program: &ConicProgram, settings: &SolverSettings) -> Result<Solution> {
    if !(settings.tol > 0.0) {
        return Err(contract("solver tolerance must be positive"));
    }
    program.validate()?;
    let n = program.n_vars();
    let start = Instant::now();

    // Clarabel form: A x + s = b, s in K.
    let mut t = Triplets { rows: Vec::new(), cols: Vec::new(), vals: Vec::new(), b: Vec::new() };
    let mut cones = Vec::new();

    for r in &program.eq_rows {
        t.push_row(&r.coeffs, 1.0, r.rhs);
    }
    if !program.eq_rows.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(program.eq_rows.len()));
    }

    let before = t.b.len();
    for r in &program.ineq_rows {
        t.push_row(&r.coeffs, 1.0, r.rhs);
    }
    for (j, &(lo, hi)) in program.bounds.iter().enumerate() {
        if hi.is_finite() {
            t.push_row(&[(j, 1.0)], 1.0, hi);
        }
        if lo.is_finite() {
            t.push_row(&[(j, -1.0)], 1.0, -lo);
        }
    }
    if t.b.len() > before {
        cones.push(SupportedConeT::NonnegativeConeT(t.b.len() - before));
    }

    for block in &program.soc_blocks {
        // s = b - A x = expr  =>  A = -terms, b = constant.
        t.push_row(&block.t.terms, -1.0, block.t.constant);
        for e in &block.x {
            t.push_row(&e.terms, -1.0, e.constant);
        }
        cones.push(SupportedConeT::SecondOrderConeT(1 + block.x.len()));
    }

    let m = t.b.len();
    let a = CscMatrix::new_from_triplets(m, n, t.rows, t.cols, t.vals);
    let p = CscMatrix::zeros((n, n));
    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_feas(settings.tol)
        .tol_gap_abs(settings.tol)
        .tol_gap_rel(settings.tol)
        .equilibrate_enable(settings.equilibrate)
        .presolve_enable(false)
        .static_regularization_constant(settings.regularization)
        .build()
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    let mut ip = DefaultSolver::new(&p, &program.objective, &a, &t.b, &cones, clarabel_settings)
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    ip.solve();

    let primal = ip.solution.x.clone();
    let mut residuals = program.residuals(&primal);
    residuals.gap = ip.info.gap_abs;
    let objective_value = program.objective_value(&primal);
    let status = match ip.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if meets_contract(program, &residuals, &primal, objective_value, settings.tol) {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIters
            }
        }
        SolverStatus::PrimalInfeasible
        | SolverStatus::AlmostPrimalInfeasible
        | SolverStatus::DualInfeasible
        | SolverStatus::AlmostDualInfeasible => SolveStatus::Infeasible,
        _ => SolveStatus::MaxIters,
    };
    let detail = format!(
        "{:?}; eq_max={:.3e} ineq_min={:.3e} cone_min={:.3e} gap={:.3e}",
        ip.solution.status, residuals.eq_max, residuals.ineq_min, residuals.cone_min, residuals.gap
    );
    Ok(Solution {
        status,
        primal,
        objective_value,
        iterations: ip.info.iterations,
        solve_seconds: start.elapsed().as_secs_f64(),
        residuals,
        detail,
    })
}

/// Sanity check on a point the interior-point method reports as solved.
/// Its stopping rule works on equilibrated data, so residuals of the
/// original program are judged relative to the size of the point and the
/// data, with headroom for the scaling.
fn meets_contract(program: &ConicProgram, r: &Residuals, x: &[f64], obj: f64, tol: f64) -> bool {
    const HEADROOM: f64 = 1e3;
    let scale = 1.0 + x.iter().fold(program.data_norm(), |m, v| m.max(v.abs()));
    let feas = HEADROOM * tol * scale;
    r.eq_max <= feas && r.ineq_min >= -feas && r.cone_min >= -feas && r.gap <= HEADROOM * tol * (1.0 + obj.abs())
}

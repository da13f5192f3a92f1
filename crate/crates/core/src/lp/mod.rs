//! Linear programming: a bounded revised simplex with exact basic duals.
//!
//! Duals and reduced costs are reported as derivatives of the objective, in
//! the instance's own sense: `duals[i] = ∂obj/∂rhs_i`. For a maximization with
//! a `≤` capacity row this is the non-negative shadow price of the capacity.
//! Under degeneracy several dual vectors may be optimal; the one returned is
//! the one belonging to the final basis.

mod lu;
mod simplex;

pub use simplex::{Basis, VarState};

use crate::model::{ProblemInstance, Relation, RowTag};
use simplex::{Engine, Outcome};
use thiserror::Error;

/// Instances with more stored coefficients than this are refused outright.
pub const MAX_NONZEROS: usize = 20_000_000;

/// Refuse instances whose constraint matrix is both this dense and larger
/// than `DENSE_CELLS` cells: the factorization is tuned for sparse bases.
pub const DENSE_FRACTION: f64 = 0.5;
pub const DENSE_CELLS: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexParams {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub pivot_tol: f64,
    /// Relative tolerance for primal/dual objective agreement.
    pub duality_tol: f64,
    pub max_iterations: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub stall_threshold: usize,
    pub refactor_interval: usize,
}

impl Default for SimplexParams {
    fn default() -> Self {
        SimplexParams {
            feas_tol: 1e-7,
            opt_tol: 1e-9,
            pivot_tol: 1e-9,
            duality_tol: 1e-6,
            max_iterations: 1_000_000,
            stall_threshold: 50,
            refactor_interval: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// Objective in the instance's sense; NaN when infeasible, ±inf when unbounded.
    pub objective: f64,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    /// Row multipliers `y` with `sup { yᵀ(Ax) − yᵀr : x, r in their boxes } < 0`,
    /// proving that `Ax = r` has no solution. See [`farkas_bound`].
    pub farkas: Option<Vec<f64>>,
    pub iterations: usize,
    pub basis: Basis,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("simplex iteration limit reached after {iterations} iterations")]
    IterationLimit { iterations: usize },
    #[error("simplex stalled after {iterations} iterations: {detail}")]
    Stalled { iterations: usize, detail: String },
    #[error("instance too dense: {rows} rows x {cols} columns with {nonzeros} nonzeros")]
    TooDense { rows: usize, cols: usize, nonzeros: usize },
    #[error("solution is {0:?}, expected optimal")]
    NotOptimal(LpStatus),
    #[error("row tag {0} not present in instance")]
    MissingRow(String),
}

fn check_size(inst: &ProblemInstance) -> Result<(), LpError> {
    let (m, n, nnz) = (inst.num_rows(), inst.num_vars(), inst.num_nonzeros());
    let cells = m.saturating_mul(n);
    let dense = cells > DENSE_CELLS && nnz as f64 > DENSE_FRACTION * cells as f64;
    if nnz > MAX_NONZEROS || dense {
        return Err(LpError::TooDense { rows: m, cols: n, nonzeros: nnz });
    }
    Ok(())
}

/// A reusable solver holding the instance's matrix, so that bounds and
/// right-hand sides can be changed and re-solved from the previous basis.
#[derive(Debug, Clone)]
pub struct LpSolver {
    engine: Engine,
    relations: Vec<Relation>,
}

impl LpSolver {
    pub fn new(inst: &ProblemInstance, params: SimplexParams) -> Result<LpSolver, LpError> {
        check_size(inst)?;
        Ok(LpSolver {
            engine: Engine::new(inst, params),
            relations: inst.constraints().iter().map(|c| c.relation).collect(),
        })
    }

    pub fn num_vars(&self) -> usize {
        self.engine.n
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.engine.lower[j], self.engine.upper[j])
    }

    pub fn set_col_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.engine.set_col_bounds(j, lower, upper);
    }

    pub fn set_rhs(&mut self, row: usize, rhs: f64) {
        let (lo, hi) = match self.relations[row] {
            Relation::Eq => (rhs, rhs),
            Relation::Le => (f64::NEG_INFINITY, rhs),
            Relation::Ge => (rhs, f64::INFINITY),
        };
        self.engine.set_row_bounds(row, lo, hi);
    }

    pub fn basis(&self) -> Basis {
        self.engine.basis()
    }

    pub fn load_basis(&mut self, basis: &Basis) {
        self.engine.load_basis(basis);
    }

    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        let start = self.engine.iterations;
        let outcome = self.engine.solve()?;
        let e = &self.engine;
        let n = e.n;
        let s = e.sense_sign;
        let primal = e.x[..n].to_vec();
        let user_obj = |x: &[f64]| -> f64 { (0..n).map(|j| s * e.cost[j] * x[j]).sum() };
        let (status, objective) = match outcome {
            Outcome::Optimal => (LpStatus::Optimal, user_obj(&primal)),
            Outcome::Infeasible => (LpStatus::Infeasible, f64::NAN),
            Outcome::Unbounded => (LpStatus::Unbounded, -s * f64::INFINITY),
        };
        let (duals, reduced_costs) = if status == LpStatus::Optimal {
            let y = e.duals();
            let d = e.phase_two_reduced_costs();
            (y.iter().map(|v| s * v).collect(), d[..n].iter().map(|v| s * v).collect())
        } else {
            (vec![0.0; e.m], vec![0.0; n])
        };
        let iterations = e.iterations - start;
        tracing::trace!(?status, iterations, rows = e.m, cols = n, "lp solved");
        Ok(LpSolution {
            status,
            primal,
            objective,
            duals,
            reduced_costs,
            farkas: if status == LpStatus::Infeasible { e.farkas.as_deref().map(clean_certificate) } else { None },
            iterations,
            basis: e.basis(),
        })
    }
}

/// Drop roundoff-level multipliers, which would otherwise pair with an
/// infinite row bound and spoil the certificate.
fn clean_certificate(y: &[f64]) -> Vec<f64> {
    let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    y.iter().map(|&v| if v.abs() <= 1e-11 * scale { 0.0 } else { v }).collect()
}

/// Solve the continuous relaxation of `inst` (integrality marks are ignored).
pub fn solve_lp(inst: &ProblemInstance, params: &SimplexParams) -> Result<LpSolution, LpError> {
    LpSolver::new(inst, *params)?.solve()
}

/// Node-balance duals laid out node-major: entry `node * periods + period`.
pub fn duals_by_tag(
    inst: &ProblemInstance,
    sol: &LpSolution,
    nodes: usize,
    periods: usize,
) -> Result<Vec<f64>, LpError> {
    if sol.status != LpStatus::Optimal {
        return Err(LpError::NotOptimal(sol.status));
    }
    let mut out = Vec::with_capacity(nodes * periods);
    for node in 0..nodes {
        for period in 0..periods {
            let tag = RowTag::NodeBalance { node, period };
            let row = inst.row(&tag).ok_or_else(|| LpError::MissingRow(tag.to_string()))?;
            out.push(sol.duals[row]);
        }
    }
    Ok(out)
}

/// Supremum of `yᵀ(Ax) − yᵀr` over the column and row boxes. A certificate
/// `y` proves infeasibility when this is negative.
pub fn farkas_bound(inst: &ProblemInstance, y: &[f64]) -> f64 {
    let mut aty = vec![0.0; inst.num_vars()];
    let mut total = 0.0;
    for (c, &yi) in inst.constraints().iter().zip(y) {
        for &(j, a) in &c.terms {
            aty[j] += a * yi;
        }
        let (lo, hi) = match c.relation {
            Relation::Eq => (c.rhs, c.rhs),
            Relation::Le => (f64::NEG_INFINITY, c.rhs),
            Relation::Ge => (c.rhs, f64::INFINITY),
        };
        total += box_sup(-yi, lo, hi);
    }
    for (v, g) in inst.variables().iter().zip(&aty) {
        total += box_sup(*g, v.lower, v.upper);
    }
    total
}

fn box_sup(g: f64, lo: f64, hi: f64) -> f64 {
    if g == 0.0 {
        0.0
    } else if g > 0.0 {
        g * hi
    } else {
        g * lo
    }
}

/// Optimality diagnostics for a solution claimed optimal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityReport {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// |primal − dual| / (1 + |primal|).
    pub relative_gap: f64,
    pub primal_residual: f64,
    /// Largest sign violation of a dual or reduced cost.
    pub dual_infeasibility: f64,
    /// max |dual_i| · slack_i over rows.
    pub row_complementarity: f64,
    /// max |rc_j| · distance to the nearest bound over columns.
    pub column_complementarity: f64,
}

/// Recompute the dual objective and complementarity measures from scratch.
pub fn check_duality(inst: &ProblemInstance, sol: &LpSolution) -> DualityReport {
    let maximize = inst.sense == crate::model::Sense::Maximize;
    // convert to a maximization view: for max problems the duals are already
    // ∂obj/∂rhs; for min problems negate everything.
    let s = if maximize { 1.0 } else { -1.0 };
    let c: Vec<f64> = inst.objective().iter().map(|v| s * v).collect();
    let y: Vec<f64> = sol.duals.iter().map(|v| s * v).collect();

    let mut aty = vec![0.0; inst.num_vars()];
    let mut dual_obj = 0.0;
    let mut dual_inf: f64 = 0.0;
    let mut row_cs: f64 = 0.0;
    for (i, con) in inst.constraints().iter().enumerate() {
        for &(j, a) in &con.terms {
            aty[j] += a * y[i];
        }
        dual_obj += y[i] * con.rhs;
        let act = inst.row_activity(i, &sol.primal);
        let slack = match con.relation {
            Relation::Eq => 0.0,
            Relation::Le => (con.rhs - act).max(0.0),
            Relation::Ge => (act - con.rhs).max(0.0),
        };
        // max problem: y ≥ 0 on ≤ rows, y ≤ 0 on ≥ rows
        let wrong = match con.relation {
            Relation::Eq => 0.0,
            Relation::Le => (-y[i]).max(0.0),
            Relation::Ge => y[i].max(0.0),
        };
        dual_inf = dual_inf.max(wrong);
        row_cs = row_cs.max(y[i].abs() * slack);
    }
    let mut col_cs: f64 = 0.0;
    for (j, v) in inst.variables().iter().enumerate() {
        let d = c[j] - aty[j];
        // d > 0 wants the upper bound, d < 0 the lower bound
        if d > 0.0 {
            if v.upper.is_finite() {
                dual_obj += d * v.upper;
            } else {
                dual_inf = dual_inf.max(d);
            }
        } else if d < 0.0 {
            if v.lower.is_finite() {
                dual_obj += d * v.lower;
            } else {
                dual_inf = dual_inf.max(-d);
            }
        }
        let x = sol.primal[j];
        let dist = if d > 0.0 {
            (v.upper - x).abs()
        } else {
            (x - v.lower).abs()
        };
        if d != 0.0 && dist.is_finite() {
            col_cs = col_cs.max(d.abs() * dist);
        }
    }
    let primal_obj = s * inst.objective_value(&sol.primal);
    DualityReport {
        primal_objective: s * primal_obj,
        dual_objective: s * dual_obj,
        relative_gap: (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs()),
        primal_residual: inst.max_violation(&sol.primal),
        dual_infeasibility: dual_inf,
        row_complementarity: row_cs,
        column_complementarity: col_cs,
    }
}

//! Branch-and-bound over binary columns.
//!
//! Best-bound node order (ties: older node first), most-fractional branching
//! (ties: lowest column), down-branch created before the up-branch. Each child
//! starts the dual simplex from its parent's optimal basis.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lp::{Basis, LpError, LpSolver, LpStatus, SimplexParams};
use crate::model::{ProblemInstance, Sense, VarKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpConfig {
    pub gap_tol: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    pub int_tol: f64,
    pub lp: SimplexParams,
}

impl Default for MilpConfig {
    fn default() -> Self {
        MilpConfig {
            gap_tol: 1e-6,
            node_limit: 1_000_000,
            time_limit: None,
            int_tol: 1e-6,
            lp: SimplexParams::default(),
        }
    }
}

impl MilpConfig {
    /// Looser gap used for benchmark-sized runs.
    pub fn benchmark() -> Self {
        MilpConfig { gap_tol: 1e-4, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilpStatus {
    /// Gap closed to within `gap_tol`.
    Optimal,
    Infeasible,
    /// Node or time limit hit; the incumbent (if any) and gap are still reported.
    LimitReached,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpStats {
    pub nodes: usize,
    pub lp_iterations: usize,
    pub max_depth: usize,
    /// Children whose LP bound exceeded the parent's; should stay zero.
    pub bound_violations: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub incumbent: Option<Vec<f64>>,
    /// Incumbent objective in the instance's sense.
    pub objective: Option<f64>,
    /// Best proven bound in the instance's sense.
    pub bound: f64,
    /// (bound − incumbent) / max(1, |incumbent|), oriented to be non-negative.
    pub gap: f64,
    pub stats: MilpStats,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("LP relaxation is unbounded")]
    Unbounded,
    #[error("binary column {col} assigned non-binary value {value}")]
    NonBinary { col: usize, value: f64 },
    #[error("assignment has {got} entries, instance has {want} columns")]
    AssignmentLength { got: usize, want: usize },
}

struct Node {
    /// Parent LP value, in maximization orientation.
    bound: f64,
    id: usize,
    depth: usize,
    fixes: Vec<(usize, f64)>,
    basis: Basis,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then_with(|| other.id.cmp(&self.id))
    }
}

fn gap_of(bound: f64, incumbent: f64) -> f64 {
    ((bound - incumbent) / incumbent.abs().max(1.0)).max(0.0)
}

pub fn solve_milp(inst: &ProblemInstance, cfg: &MilpConfig) -> Result<MilpSolution, MilpError> {
    let start = Instant::now();
    let orient = match inst.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let binaries = inst.binaries();
    let root_bounds: Vec<(f64, f64)> =
        binaries.iter().map(|&j| (inst.variables()[j].lower, inst.variables()[j].upper)).collect();
    let mut lp = LpSolver::new(inst, cfg.lp)?;
    let mut stats = MilpStats::default();
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    heap.push(Node { bound: f64::INFINITY, id: next_id, depth: 0, fixes: Vec::new(), basis: lp.basis() });
    next_id += 1;
    let mut limit_hit = false;

    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if gap_of(node.bound, *inc) <= cfg.gap_tol {
                heap.push(node);
                break;
            }
        }
        if stats.nodes >= cfg.node_limit || cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
            heap.push(node);
            limit_hit = true;
            break;
        }
        stats.nodes += 1;
        stats.max_depth = stats.max_depth.max(node.depth);

        for (k, &j) in binaries.iter().enumerate() {
            lp.set_col_bounds(j, root_bounds[k].0, root_bounds[k].1);
        }
        for &(j, v) in &node.fixes {
            lp.set_col_bounds(j, v, v);
        }
        lp.load_basis(&node.basis);
        let sol = lp.solve()?;
        stats.lp_iterations += sol.iterations;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(MilpError::Unbounded),
            LpStatus::Optimal => {}
        }
        let value = orient * sol.objective;
        if value > node.bound + 1e-9 * (1.0 + node.bound.abs()) {
            stats.bound_violations += 1;
        }
        if let Some((inc, _)) = &incumbent {
            if gap_of(value, *inc) <= cfg.gap_tol {
                continue;
            }
        }

        let mut branch: Option<(usize, f64)> = None;
        for &j in &binaries {
            let x = sol.primal[j];
            let frac = (x - x.floor()).min(x.ceil() - x);
            if frac > cfg.int_tol && branch.is_none_or(|(_, best)| frac > best) {
                branch = Some((j, frac));
            }
        }
        match branch {
            None => {
                let (x, v) = polish(&mut lp, &sol.primal, &binaries, &root_bounds, orient, &mut stats)?
                    .unwrap_or_else(|| (sol.primal.clone(), value));
                if incumbent.as_ref().is_none_or(|(inc, _)| v > *inc) {
                    tracing::debug!(nodes = stats.nodes, objective = orient * v, "new incumbent");
                    incumbent = Some((v, x));
                }
            }
            Some((j, _)) => {
                for fix in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, fix));
                    heap.push(Node {
                        bound: value,
                        id: next_id,
                        depth: node.depth + 1,
                        fixes,
                        basis: sol.basis.clone(),
                    });
                    next_id += 1;
                }
            }
        }
    }

    stats.elapsed = start.elapsed();
    let open_bound = heap.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    let (status, objective, x, bound, gap) = match incumbent {
        Some((inc, x)) => {
            let bound = open_bound.max(inc);
            let gap = gap_of(bound, inc);
            let status = if limit_hit && gap > cfg.gap_tol { MilpStatus::LimitReached } else { MilpStatus::Optimal };
            (status, Some(orient * inc), Some(x), orient * bound, gap)
        }
        None if limit_hit => (MilpStatus::LimitReached, None, None, orient * open_bound, f64::INFINITY),
        None => (MilpStatus::Infeasible, None, None, orient * f64::NEG_INFINITY, f64::INFINITY),
    };
    tracing::debug!(?status, nodes = stats.nodes, gap, "branch-and-bound finished");
    Ok(MilpSolution { status, incumbent: x, objective, bound, gap, stats })
}

/// Re-solve with every binary pinned to its rounded value, so the incumbent
/// is exactly integral and primal feasible.
fn polish(
    lp: &mut LpSolver,
    x: &[f64],
    binaries: &[usize],
    root_bounds: &[(f64, f64)],
    orient: f64,
    stats: &mut MilpStats,
) -> Result<Option<(Vec<f64>, f64)>, MilpError> {
    for &j in binaries {
        let v = x[j].round();
        lp.set_col_bounds(j, v, v);
    }
    let sol = lp.solve()?;
    stats.lp_iterations += sol.iterations;
    for (k, &j) in binaries.iter().enumerate() {
        lp.set_col_bounds(j, root_bounds[k].0, root_bounds[k].1);
    }
    Ok((sol.status == LpStatus::Optimal).then_some((sol.primal, orient * sol.objective)))
}

/// Pin every binary column to its value in `assignment` (a full column
/// vector) and drop the integrality marks, leaving a pure LP.
pub fn fix_binaries(inst: &ProblemInstance, assignment: &[f64], int_tol: f64) -> Result<ProblemInstance, MilpError> {
    if assignment.len() != inst.num_vars() {
        return Err(MilpError::AssignmentLength { got: assignment.len(), want: inst.num_vars() });
    }
    let mut out = inst.clone();
    for j in inst.binaries() {
        let v = assignment[j];
        let r = v.round();
        if (v - r).abs() > int_tol || !(r == 0.0 || r == 1.0) {
            return Err(MilpError::NonBinary { col: j, value: v });
        }
        out.set_bounds(j, r, r);
        out.set_kind(j, VarKind::Continuous);
    }
    Ok(out)
}

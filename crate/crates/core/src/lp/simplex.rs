//! Bounded-variable revised simplex (primal and dual).
//!
//! Internally every instance is `min c·x` over `[A | -I] (x, r) = 0` with a
//! box on each structural column `x` and on each row activity `r`. The
//! all-logical basis is always available as a starting point, and any basis
//! from a structurally identical instance can be loaded for a warm start.

use super::lu::{factorize, Factor, SparseColumn};
use super::{LpError, SimplexParams};
use crate::model::{ProblemInstance, Relation, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free column resting at zero.
    Free,
}

/// Simplex basis over structural columns followed by row logicals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub(crate) states: Vec<VarState>,
}

impl Basis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_basic(&self) -> usize {
        self.states.iter().filter(|s| **s == VarState::Basic).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
}

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct Engine {
    pub(crate) n: usize,
    pub(crate) m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    row_start: Vec<usize>,
    row_col: Vec<usize>,
    row_val: Vec<f64>,
    /// Minimization costs over structurals and logicals.
    pub(crate) cost: Vec<f64>,
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) x: Vec<f64>,
    pub(crate) state: Vec<VarState>,
    head: Vec<usize>,
    pos: Vec<usize>,
    factor: Option<Factor>,
    pub(crate) params: SimplexParams,
    pub(crate) iterations: usize,
    degenerate_run: usize,
    bland: bool,
    pub(crate) farkas: Option<Vec<f64>>,
    pub(crate) sense_sign: f64,
}

impl Engine {
    pub(crate) fn new(inst: &ProblemInstance, params: SimplexParams) -> Engine {
        let n = inst.num_vars();
        let m = inst.num_rows();
        let sense_sign = match inst.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };

        let mut row_start = Vec::with_capacity(m + 1);
        let mut row_col = Vec::new();
        let mut row_val = Vec::new();
        row_start.push(0);
        let mut counts = vec![0usize; n];
        for c in inst.constraints() {
            for &(j, a) in &c.terms {
                row_col.push(j);
                row_val.push(a);
                counts[j] += 1;
            }
            row_start.push(row_col.len());
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        let mut fill = col_start.clone();
        let mut col_row = vec![0usize; row_col.len()];
        let mut col_val = vec![0.0f64; row_col.len()];
        for i in 0..m {
            for k in row_start[i]..row_start[i + 1] {
                let j = row_col[k];
                col_row[fill[j]] = i;
                col_val[fill[j]] = row_val[k];
                fill[j] += 1;
            }
        }

        let mut cost = vec![0.0; n + m];
        let mut lower = vec![0.0; n + m];
        let mut upper = vec![0.0; n + m];
        for (j, v) in inst.variables().iter().enumerate() {
            cost[j] = sense_sign * inst.objective()[j];
            lower[j] = v.lower;
            upper[j] = v.upper;
        }
        for (i, c) in inst.constraints().iter().enumerate() {
            let (lo, hi) = match c.relation {
                Relation::Eq => (c.rhs, c.rhs),
                Relation::Le => (f64::NEG_INFINITY, c.rhs),
                Relation::Ge => (c.rhs, f64::INFINITY),
            };
            lower[n + i] = lo;
            upper[n + i] = hi;
        }

        let mut e = Engine {
            n,
            m,
            col_start,
            col_row,
            col_val,
            row_start,
            row_col,
            row_val,
            cost,
            lower,
            upper,
            x: vec![0.0; n + m],
            state: vec![VarState::AtLower; n + m],
            head: Vec::new(),
            pos: vec![NONE; n + m],
            factor: None,
            params,
            iterations: 0,
            degenerate_run: 0,
            bland: false,
            farkas: None,
            sense_sign,
        };
        e.slack_basis();
        e
    }

    fn slack_basis(&mut self) {
        let states = (0..self.n + self.m)
            .map(|j| if j >= self.n { VarState::Basic } else { self.default_nonbasic(j) })
            .collect();
        self.install(states);
    }

    fn default_nonbasic(&self, j: usize) -> VarState {
        if self.lower[j].is_finite() {
            VarState::AtLower
        } else if self.upper[j].is_finite() {
            VarState::AtUpper
        } else {
            VarState::Free
        }
    }

    /// Install a state vector, sanitizing nonbasic states against bounds.
    fn install(&mut self, states: Vec<VarState>) {
        self.state = states;
        self.head.clear();
        self.pos.iter_mut().for_each(|p| *p = NONE);
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic {
                self.pos[j] = self.head.len();
                self.head.push(j);
            } else {
                self.fix_nonbasic_state(j);
            }
        }
        self.factor = None;
    }

    fn fix_nonbasic_state(&mut self, j: usize) {
        let st = match self.state[j] {
            VarState::AtLower if self.lower[j].is_finite() => VarState::AtLower,
            VarState::AtUpper if self.upper[j].is_finite() => VarState::AtUpper,
            VarState::Free if !self.lower[j].is_finite() && !self.upper[j].is_finite() => VarState::Free,
            _ => self.default_nonbasic(j),
        };
        self.state[j] = st;
        self.x[j] = match st {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            _ => 0.0,
        };
    }

    pub(crate) fn basis(&self) -> Basis {
        Basis { states: self.state.clone() }
    }

    /// Load a warm-start basis; falls back to the slack basis when the shape
    /// does not match.
    pub(crate) fn load_basis(&mut self, basis: &Basis) {
        if basis.states.len() != self.n + self.m || basis.num_basic() != self.m {
            self.slack_basis();
        } else {
            self.install(basis.states.clone());
        }
    }

    pub(crate) fn set_col_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
        if self.state[j] != VarState::Basic {
            self.fix_nonbasic_state(j);
        }
    }

    pub(crate) fn set_row_bounds(&mut self, i: usize, lower: f64, upper: f64) {
        self.set_col_bounds(self.n + i, lower, upper);
    }

    fn scatter_column(&self, j: usize, buf: &mut [f64]) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                buf[self.col_row[k]] += self.col_val[k];
            }
        } else {
            buf[j - self.n] -= 1.0;
        }
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for k in self.col_start[j]..self.col_start[j + 1] {
                s += self.col_val[k] * y[self.col_row[k]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let mut repairs = 0usize;
        loop {
            let cols: Vec<SparseColumn> = self
                .head
                .iter()
                .map(|&j| {
                    if j < self.n {
                        (self.col_start[j]..self.col_start[j + 1])
                            .map(|k| (self.col_row[k], self.col_val[k]))
                            .collect()
                    } else {
                        vec![(j - self.n, -1.0)]
                    }
                })
                .collect();
            match factorize(self.m, &cols) {
                Ok(f) => {
                    self.factor = Some(f);
                    return Ok(());
                }
                Err(sing) => {
                    repairs += sing.positions.len();
                    if repairs > self.m + 1 {
                        return Err(LpError::Stalled {
                            iterations: self.iterations,
                            detail: "basis repair did not converge".into(),
                        });
                    }
                    for (&p, &row) in sing.positions.iter().zip(&sing.rows) {
                        let out = self.head[p];
                        self.state[out] = self.nearest_bound_state(out);
                        self.pos[out] = NONE;
                        self.fix_nonbasic_state(out);
                        let logical = self.n + row;
                        self.head[p] = logical;
                        self.pos[logical] = p;
                        self.state[logical] = VarState::Basic;
                    }
                }
            }
        }
    }

    fn nearest_bound_state(&self, j: usize) -> VarState {
        let (l, u, v) = (self.lower[j], self.upper[j], self.x[j]);
        match (l.is_finite(), u.is_finite()) {
            (true, true) => {
                if (v - l).abs() <= (u - v).abs() {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                }
            }
            (true, false) => VarState::AtLower,
            (false, true) => VarState::AtUpper,
            (false, false) => VarState::Free,
        }
    }

    fn factor(&self) -> &Factor {
        self.factor.as_ref().expect("factorized basis")
    }

    fn ftran_column(&self, j: usize) -> Vec<f64> {
        let mut rhs = vec![0.0; self.m];
        self.scatter_column(j, &mut rhs);
        let mut out = vec![0.0; self.m];
        self.factor().ftran(&mut rhs, &mut out);
        out
    }

    /// Recompute basic values from the nonbasic ones.
    fn compute_basic_values(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic || self.x[j] == 0.0 {
                continue;
            }
            let v = self.x[j];
            if j < self.n {
                for k in self.col_start[j]..self.col_start[j + 1] {
                    rhs[self.col_row[k]] -= self.col_val[k] * v;
                }
            } else {
                rhs[j - self.n] += v;
            }
        }
        let mut xb = vec![0.0; self.m];
        self.factor().ftran(&mut rhs, &mut xb);
        for (p, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[p];
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        (self.lower[j] - v).max(v - self.upper[j]).max(0.0)
    }

    pub(crate) fn max_primal_infeasibility(&self) -> f64 {
        self.head.iter().map(|&j| self.infeasibility(j)).fold(0.0, f64::max)
    }

    /// Row-space duals of the given basic costs.
    fn btran_costs(&self, cb: &[f64]) -> Vec<f64> {
        let mut c = cb.to_vec();
        let mut y = vec![0.0; self.m];
        self.factor().btran(&mut c, &mut y);
        y
    }

    pub(crate) fn duals(&self) -> Vec<f64> {
        let cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        self.btran_costs(&cb)
    }

    fn reduced_costs(&self, y: &[f64], phase_one: bool) -> Vec<f64> {
        let mut d = vec![0.0; self.n + self.m];
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic {
                continue;
            }
            let c = if phase_one { 0.0 } else { self.cost[j] };
            d[j] = c - self.column_dot(j, y);
        }
        d
    }

    pub(crate) fn phase_two_reduced_costs(&self) -> Vec<f64> {
        let y = self.duals();
        self.reduced_costs(&y, false)
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    fn eligible(&self, j: usize, dj: f64) -> bool {
        let tol = self.params.opt_tol;
        if self.is_fixed(j) {
            return false;
        }
        match self.state[j] {
            VarState::Basic => false,
            VarState::AtLower => dj < -tol,
            VarState::AtUpper => dj > tol,
            VarState::Free => dj.abs() > tol,
        }
    }

    fn max_dual_infeasibility(&self, d: &[f64]) -> f64 {
        (0..self.n + self.m)
            .filter(|&j| self.state[j] != VarState::Basic && !self.is_fixed(j))
            .map(|j| match self.state[j] {
                VarState::AtLower => (-d[j]).max(0.0),
                VarState::AtUpper => d[j].max(0.0),
                VarState::Free => d[j].abs(),
                VarState::Basic => 0.0,
            })
            .fold(0.0, f64::max)
    }

    fn check_iterations(&self) -> Result<(), LpError> {
        if self.iterations >= self.params.max_iterations {
            Err(LpError::IterationLimit { iterations: self.iterations })
        } else {
            Ok(())
        }
    }

    fn note_step(&mut self, degenerate: bool) {
        if degenerate {
            self.degenerate_run += 1;
            if self.degenerate_run > self.params.stall_threshold {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64], leave_state: VarState) {
        let leaving = self.head[r];
        self.state[leaving] = leave_state;
        self.x[leaving] = match leave_state {
            VarState::AtLower => self.lower[leaving],
            VarState::AtUpper => self.upper[leaving],
            _ => 0.0,
        };
        self.pos[leaving] = NONE;
        self.head[r] = q;
        self.pos[q] = r;
        self.state[q] = VarState::Basic;
        if let Some(f) = self.factor.as_mut() {
            f.update(r, alpha);
        }
    }

    /// Refactors when the eta file is long; reports whether it did.
    fn maybe_refactor(&mut self) -> Result<bool, LpError> {
        let needs = match &self.factor {
            None => true,
            Some(f) => f.wants_refactor(self.params.refactor_interval),
        };
        if needs {
            self.refactor()?;
            self.compute_basic_values();
        }
        Ok(needs)
    }

    /// Top-level driver: picks primal or dual simplex depending on which
    /// feasibility the current basis has.
    pub(crate) fn solve(&mut self) -> Result<Outcome, LpError> {
        self.farkas = None;
        self.degenerate_run = 0;
        self.bland = false;
        self.refactor()?;
        self.compute_basic_values();
        let mut cleanups = 0;
        loop {
            let outcome = if self.max_primal_infeasibility() > self.params.feas_tol
                && self.make_dual_feasible()
            {
                let original = self.perturb_costs();
                let result = self.dual();
                self.cost = original;
                match result? {
                    Outcome::Optimal => self.primal()?,
                    other => other,
                }
            } else {
                self.primal()?
            };
            if outcome != Outcome::Optimal {
                return Ok(outcome);
            }
            self.refactor()?;
            self.compute_basic_values();
            let d = self.phase_two_reduced_costs();
            let primal_ok = self.max_primal_infeasibility() <= self.params.feas_tol;
            let dual_ok = self.max_dual_infeasibility(&d) <= self.params.opt_tol * 10.0;
            if (primal_ok && dual_ok) || cleanups >= 3 {
                return Ok(Outcome::Optimal);
            }
            cleanups += 1;
        }
    }

    /// Shifts nonbasic structural costs by tiny deterministic amounts in
    /// their dual-feasible direction, which breaks the ties that make the
    /// dual simplex stall. Returns the original costs.
    fn perturb_costs(&mut self) -> Vec<f64> {
        let original = self.cost.clone();
        for j in 0..self.n {
            if self.is_fixed(j) {
                continue;
            }
            // splitmix64 of the column index
            let mut z = (j as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            let u = (z >> 11) as f64 / (1u64 << 53) as f64;
            let xi = 1e-7 * (1.0 + u) * (1.0 + original[j].abs());
            match self.state[j] {
                VarState::AtLower => self.cost[j] += xi,
                VarState::AtUpper => self.cost[j] -= xi,
                _ => {}
            }
        }
        original
    }

    /// Flip boxed nonbasics to the bound their reduced cost prefers. Returns
    /// false when some non-boxed column is dual infeasible.
    fn make_dual_feasible(&mut self) -> bool {
        let d = self.phase_two_reduced_costs();
        let tol = self.params.opt_tol;
        let mut flipped = false;
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic || self.is_fixed(j) {
                continue;
            }
            let boxed = self.lower[j].is_finite() && self.upper[j].is_finite();
            match self.state[j] {
                VarState::AtLower if d[j] < -tol => {
                    if !boxed {
                        return false;
                    }
                    self.state[j] = VarState::AtUpper;
                    self.x[j] = self.upper[j];
                    flipped = true;
                }
                VarState::AtUpper if d[j] > tol => {
                    if !boxed {
                        return false;
                    }
                    self.state[j] = VarState::AtLower;
                    self.x[j] = self.lower[j];
                    flipped = true;
                }
                VarState::Free if d[j].abs() > tol => return false,
                _ => {}
            }
        }
        if flipped {
            self.compute_basic_values();
        }
        true
    }

    fn primal(&mut self) -> Result<Outcome, LpError> {
        let ftol = self.params.feas_tol;
        loop {
            self.check_iterations()?;
            self.maybe_refactor()?;
            let phase_one = self.max_primal_infeasibility() > ftol;
            let cb: Vec<f64> = self
                .head
                .iter()
                .map(|&j| {
                    if phase_one {
                        let v = self.x[j];
                        if v < self.lower[j] - ftol {
                            -1.0
                        } else if v > self.upper[j] + ftol {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        self.cost[j]
                    }
                })
                .collect();
            let y = self.btran_costs(&cb);
            let d = self.reduced_costs(&y, phase_one);

            let mut entering: Option<usize> = None;
            for j in 0..self.n + self.m {
                if !self.eligible(j, d[j]) {
                    continue;
                }
                entering = match entering {
                    None => Some(j),
                    Some(_) if self.bland => entering,
                    Some(p) => {
                        if d[j].abs() > d[p].abs() {
                            Some(j)
                        } else {
                            Some(p)
                        }
                    }
                };
            }
            let Some(q) = entering else {
                if phase_one {
                    // confirm on a fresh factorization before declaring infeasibility
                    let before = self.factor().num_updates();
                    if before > 0 {
                        self.refactor()?;
                        self.compute_basic_values();
                        continue;
                    }
                    self.farkas = Some(y);
                    return Ok(Outcome::Infeasible);
                }
                return Ok(Outcome::Optimal);
            };

            let alpha = self.ftran_column(q);
            let dir = if d[q] < 0.0 { 1.0 } else { -1.0 };
            let pivot_tol = self.params.pivot_tol;

            // Harris two-pass ratio test
            let mut candidates: Vec<(usize, f64, VarState)> = Vec::new();
            let mut theta_max = f64::INFINITY;
            for (i, &a) in alpha.iter().enumerate() {
                if a.abs() <= pivot_tol {
                    continue;
                }
                let j = self.head[i];
                let v = self.x[j];
                let g = -dir * a;
                let (l, u) = (self.lower[j], self.upper[j]);
                let target = if g < 0.0 {
                    if phase_one && v > u + ftol {
                        Some((u, VarState::AtUpper))
                    } else if phase_one && v < l - ftol {
                        None
                    } else if l.is_finite() {
                        Some((l, VarState::AtLower))
                    } else {
                        None
                    }
                } else if phase_one && v < l - ftol {
                    Some((l, VarState::AtLower))
                } else if phase_one && v > u + ftol {
                    None
                } else if u.is_finite() {
                    Some((u, VarState::AtUpper))
                } else {
                    None
                };
                let Some((b, st)) = target else { continue };
                let dist = ((b - v) / g).max(0.0);
                let relaxed = ((b - v) + g.signum() * ftol) / g;
                theta_max = theta_max.min(relaxed.max(0.0));
                let st = if l == u { VarState::AtLower } else { st };
                candidates.push((i, dist, st));
            }
            let mut leave: Option<(usize, f64, VarState)> = None;
            if self.bland {
                let min_ratio = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
                for &c in &candidates {
                    if c.1 <= min_ratio + 1e-12 {
                        leave = match leave {
                            Some(p) if self.head[p.0] < self.head[c.0] => Some(p),
                            _ => Some(c),
                        };
                    }
                }
            } else {
                for &c in &candidates {
                    if c.1 > theta_max {
                        continue;
                    }
                    leave = match leave {
                        None => Some(c),
                        Some(p) => {
                            let (ac, ap) = (alpha[c.0].abs(), alpha[p.0].abs());
                            if ac > ap || (ac == ap && self.head[c.0] < self.head[p.0]) {
                                Some(c)
                            } else {
                                Some(p)
                            }
                        }
                    };
                }
            }

            let flip = if self.lower[q].is_finite() && self.upper[q].is_finite() {
                Some(self.upper[q] - self.lower[q])
            } else {
                None
            };
            self.iterations += 1;
            match (leave, flip) {
                (None, None) => {
                    if phase_one {
                        return Err(LpError::Stalled {
                            iterations: self.iterations,
                            detail: "phase-one ratio test found no blocking variable".into(),
                        });
                    }
                    return Ok(Outcome::Unbounded);
                }
                (lv, Some(span)) if lv.is_none_or(|c| span <= c.1) => {
                    for (i, &a) in alpha.iter().enumerate() {
                        if a != 0.0 {
                            let j = self.head[i];
                            self.x[j] -= span * dir * a;
                        }
                    }
                    if dir > 0.0 {
                        self.state[q] = VarState::AtUpper;
                        self.x[q] = self.upper[q];
                    } else {
                        self.state[q] = VarState::AtLower;
                        self.x[q] = self.lower[q];
                    }
                    self.note_step(span <= 1e-12);
                }
                (Some((r, theta, st)), _) => {
                    for (i, &a) in alpha.iter().enumerate() {
                        if a != 0.0 {
                            let j = self.head[i];
                            self.x[j] -= theta * dir * a;
                        }
                    }
                    let xq = self.x[q] + theta * dir;
                    self.pivot(r, q, &alpha, st);
                    self.x[q] = xq;
                    self.note_step(theta <= 1e-12);
                }
                (None, Some(_)) => unreachable!(),
            }
        }
    }

    /// Dual simplex with dual steepest-edge pricing. Reduced costs are
    /// updated from the pivot row and refreshed at every refactorization.
    fn dual(&mut self) -> Result<Outcome, LpError> {
        let ftol = self.params.feas_tol;
        let pivot_tol = self.params.pivot_tol;
        let opt_tol = self.params.opt_tol;
        let total = self.n + self.m;
        // exact for the all-logical basis, an approximation otherwise
        let mut weight = vec![1.0f64; self.m];
        let mut d = self.phase_two_reduced_costs();
        let mut arow = vec![0.0; total];
        let mut touched: Vec<usize> = Vec::new();
        loop {
            self.check_iterations()?;
            if self.maybe_refactor()? {
                d = self.phase_two_reduced_costs();
            }
            let mut leave: Option<(usize, f64)> = None;
            for (p, &j) in self.head.iter().enumerate() {
                let inf = self.infeasibility(j);
                if inf <= ftol {
                    continue;
                }
                let score = if self.bland { -(j as f64) } else { inf * inf / weight[p] };
                if leave.is_none_or(|(_, best)| score > best) {
                    leave = Some((p, score));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(Outcome::Optimal);
            };
            let jr = self.head[r];
            let below = self.x[jr] < self.lower[jr];
            let s = if below { 1.0 } else { -1.0 };

            let mut e_r = vec![0.0; self.m];
            e_r[r] = 1.0;
            let rho = self.btran_costs(&e_r);
            for &j in &touched {
                arow[j] = 0.0;
            }
            touched.clear();
            for (i, &ri) in rho.iter().enumerate() {
                if ri == 0.0 {
                    continue;
                }
                for k in self.row_start[i]..self.row_start[i + 1] {
                    let j = self.row_col[k];
                    if arow[j] == 0.0 {
                        touched.push(j);
                    }
                    arow[j] += ri * self.row_val[k];
                }
                arow[self.n + i] = -ri;
                touched.push(self.n + i);
            }

            let mut cands: Vec<(usize, f64)> = Vec::new();
            let mut t_max = f64::INFINITY;
            for &j in &touched {
                if self.state[j] == VarState::Basic || self.is_fixed(j) {
                    continue;
                }
                let a = arow[j];
                if a.abs() <= pivot_tol {
                    continue;
                }
                let ok = match self.state[j] {
                    VarState::AtLower => a * s < 0.0,
                    VarState::AtUpper => a * s > 0.0,
                    VarState::Free => true,
                    VarState::Basic => false,
                };
                if !ok {
                    continue;
                }
                let dj = match self.state[j] {
                    VarState::AtLower => d[j].max(0.0),
                    VarState::AtUpper => (-d[j]).max(0.0),
                    _ => d[j].abs(),
                };
                let ratio = dj / a.abs();
                t_max = t_max.min((dj + opt_tol) / a.abs());
                cands.push((j, ratio));
            }
            if cands.is_empty() {
                if self.factor().num_updates() > 0 {
                    self.refactor()?;
                    self.compute_basic_values();
                    d = self.phase_two_reduced_costs();
                    continue;
                }
                let y: Vec<f64> = rho.iter().map(|v| -s * v).collect();
                self.farkas = Some(y);
                return Ok(Outcome::Infeasible);
            }
            let mut entering: Option<(usize, f64)> = None;
            if self.bland {
                let min_ratio = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
                entering = cands.iter().copied().filter(|c| c.1 <= min_ratio + 1e-12).min_by_key(|c| c.0);
            } else {
                for &c in &cands {
                    if c.1 > t_max {
                        continue;
                    }
                    entering = match entering {
                        None => Some(c),
                        Some(p) => {
                            let (ac, ap) = (arow[c.0].abs(), arow[p.0].abs());
                            if ac > ap || (ac == ap && c.0 < p.0) {
                                Some(c)
                            } else {
                                Some(p)
                            }
                        }
                    };
                }
            }
            let (q, step) = entering.expect("non-empty candidate set");
            let alpha = self.ftran_column(q);
            let arq = alpha[r];
            if arq.abs() <= pivot_tol
                || (arq - arow[q]).abs() > 1e-6 * (1.0 + arq.abs()).max(arow[q].abs())
            {
                if self.factor().num_updates() > 0 {
                    self.refactor()?;
                    self.compute_basic_values();
                    d = self.phase_two_reduced_costs();
                    continue;
                }
                return Err(LpError::Stalled {
                    iterations: self.iterations,
                    detail: format!("unstable dual pivot {arq:e} vs {:e}", arow[q]),
                });
            }

            // dual steepest-edge weights
            let mut rho_rows = rho.clone();
            let mut tau = vec![0.0; self.m];
            self.factor().ftran(&mut rho_rows, &mut tau);
            let w_r = rho.iter().map(|v| v * v).sum::<f64>();
            for (i, &a) in alpha.iter().enumerate() {
                if i == r || a == 0.0 {
                    continue;
                }
                let k = a / arq;
                weight[i] = (weight[i] + k * (k * w_r - 2.0 * tau[i])).max(1e-8);
            }
            weight[r] = (w_r / (arq * arq)).max(1e-8);

            // reduced costs
            let theta_d = d[q] / arow[q];
            if theta_d != 0.0 {
                for &j in &touched {
                    if self.state[j] != VarState::Basic {
                        d[j] -= theta_d * arow[j];
                    }
                }
            }
            d[q] = 0.0;

            let target = if below { self.lower[jr] } else { self.upper[jr] };
            let delta = (self.x[jr] - target) / arq;
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let j = self.head[i];
                    self.x[j] -= delta * a;
                }
            }
            let xq = self.x[q] + delta;
            let st = if self.lower[jr] == self.upper[jr] || below {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            self.iterations += 1;
            self.pivot(r, q, &alpha, st);
            self.x[q] = xq;
            d[jr] = -theta_d;
            self.note_step(step <= 1e-12);
        }
    }
}

//! Two-price markup clearing: convexified scaled clearing, rounding of the
//! fractional commitments, residual clearing and the markup scan.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::allocation::{allocation_distance, Allocation};
use crate::formulation::{build_cswmp, build_rc_delta, build_rc_milp, BalanceMode, ClearingOptions, FormulationError};
use crate::lp::{duals_by_tag, Basis, LpError, LpSolution, LpSolver, LpStatus, SimplexParams};
use crate::model::ProblemInstance;
use crate::metrics::{budget_and_oversupply, markup_revenue, seller_mwps, welfare, Budget, MetricError, PriceSystem};
use crate::milp::{solve_milp, MilpConfig, MilpError, MilpStatus};
use crate::scenario::Scenario;

pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.01, 0.1, 0.2, 0.5];
pub const DEFAULT_DELTAS: [f64; 7] = [0.01, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9];

/// Budget tolerance relative to the buyers' payments.
const BUDGET_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MarkupError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("threshold {0} is outside (0, 1]")]
    InvalidDelta(f64),
    #[error("{0} candidate set is empty")]
    EmptyCandidates(&'static str),
    #[error("markup candidates must be ascending, finite and >= 0")]
    UnsortedAlphas,
    #[error("convexified clearing is infeasible ({balance} balance, auctioneer demand {auctioneer_demand})")]
    Phase1Infeasible { balance: BalanceMode, auctioneer_demand: f64 },
    #[error("residual clearing is infeasible for the given commitments")]
    ResidualInfeasible,
    #[error("residual clearing is infeasible for every threshold in {0:?}")]
    AllDeltasInfeasible(Vec<f64>),
    #[error("rounding MILP stopped at a limit without a feasible commitment")]
    RoundingLimit,
    #[error("no markup candidate covers the make-whole payments: {}", summarize(.0))]
    NoAlpha(Vec<AlphaTrial>),
}

fn summarize(trials: &[AlphaTrial]) -> String {
    trials
        .iter()
        .map(|t| match (t.budget_after_mwp, &t.note) {
            (Some(b), _) => format!("α={} budget {:.2}", t.alpha, b),
            (None, Some(n)) => format!("α={} {}", t.alpha, n),
            (None, None) => format!("α={} not evaluated", t.alpha),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl MarkupError {
    /// Whether the failure is an infeasibility outcome rather than a fault.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            MarkupError::Phase1Infeasible { .. }
                | MarkupError::ResidualInfeasible
                | MarkupError::AllDeltasInfeasible(_)
                | MarkupError::NoAlpha(_)
        )
    }

    pub fn is_limit(&self) -> bool {
        matches!(self, MarkupError::RoundingLimit)
    }
}

/// Phase-1 result: relaxed allocation with its supporting seller prices.
#[derive(Debug, Clone, Serialize)]
pub struct Pseudoequilibrium {
    pub allocation: Allocation,
    pub prices: PriceSystem,
    /// Seller-major commitments, clamped to `[0, 1]`.
    pub commitment: Vec<f64>,
    /// Integral commitments where `min(u, 1 − u) ≤ int_tol`, seller-major.
    pub integral: Vec<Option<f64>>,
    /// Optimal basis of the relaxation; residual clearing starts from it.
    #[serde(skip)]
    pub basis: Option<Basis>,
}

impl Pseudoequilibrium {
    pub fn alpha(&self) -> f64 {
        self.prices.alpha
    }

    pub fn is_integral(&self) -> bool {
        self.integral.iter().all(Option::is_some)
    }
}

pub fn solve_phase1(s: &Scenario, opts: &ClearingOptions, params: &SimplexParams) -> Result<Pseudoequilibrium, MarkupError> {
    solve_phase1_tol(s, opts, params, 1e-6, None)
}

fn solve_from(inst: &ProblemInstance, params: &SimplexParams, warm: Option<&Basis>) -> Result<LpSolution, LpError> {
    let mut lp = LpSolver::new(inst, *params)?;
    if let Some(b) = warm {
        lp.load_basis(b);
    }
    lp.solve()
}

pub fn solve_phase1_tol(
    s: &Scenario,
    opts: &ClearingOptions,
    params: &SimplexParams,
    int_tol: f64,
    warm: Option<&Basis>,
) -> Result<Pseudoequilibrium, MarkupError> {
    let inst = build_cswmp(s, opts)?;
    let sol = solve_from(&inst, params, warm)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(MarkupError::Phase1Infeasible {
                balance: opts.balance,
                auctioneer_demand: opts.auctioneer_demand,
            })
        }
        LpStatus::Unbounded => return Err(LpError::NotOptimal(LpStatus::Unbounded).into()),
    }
    let seller = duals_by_tag(&inst, &sol, s.num_nodes(), s.horizon)?;
    let mut allocation = Allocation::from_solution(s, &inst, &sol.primal);
    let mut integral = Vec::with_capacity(s.sellers.len() * s.horizon);
    for row in &mut allocation.commitment {
        for u in row.iter_mut() {
            *u = u.clamp(0.0, 1.0);
            if u.min(1.0 - *u) <= int_tol {
                *u = u.round();
                integral.push(Some(*u));
            } else {
                integral.push(None);
            }
        }
    }
    Ok(Pseudoequilibrium {
        commitment: allocation.commitment_vector(),
        allocation,
        prices: PriceSystem { horizon: s.horizon, seller, alpha: opts.alpha },
        integral,
        basis: Some(sol.basis),
    })
}

/// Rounds each entry to 1 when it is at least `delta`, else to 0.
pub fn round_threshold(u: &[f64], delta: f64) -> Result<Vec<f64>, MarkupError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(MarkupError::InvalidDelta(delta));
    }
    Ok(u.iter().map(|&v| if v >= delta { 1.0 } else { 0.0 }).collect())
}

/// Clears the market with every commitment fixed. `opts` should carry the
/// residual settings (no auctioneer demand).
pub fn residual_clear(
    s: &Scenario,
    opts: &ClearingOptions,
    fixed_u: &[f64],
    params: &SimplexParams,
) -> Result<Allocation, MarkupError> {
    residual_clear_from(s, opts, fixed_u, params, None)
}

/// [`residual_clear`] started from `warm`, typically the phase-1 basis,
/// which has the same layout.
pub fn residual_clear_from(
    s: &Scenario,
    opts: &ClearingOptions,
    fixed_u: &[f64],
    params: &SimplexParams,
    warm: Option<&Basis>,
) -> Result<Allocation, MarkupError> {
    let inst = build_rc_delta(s, opts, fixed_u)?;
    let sol = solve_from(&inst, params, warm)?;
    match sol.status {
        LpStatus::Optimal => Ok(Allocation::from_solution(s, &inst, &sol.primal)),
        LpStatus::Infeasible => Err(MarkupError::ResidualInfeasible),
        LpStatus::Unbounded => Err(LpError::NotOptimal(LpStatus::Unbounded).into()),
    }
}

/// Result of one threshold.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaTrial {
    pub delta: f64,
    pub feasible: bool,
    pub welfare: Option<f64>,
    /// Distance from the phase-1 allocation.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DeltaChoice {
    pub delta: f64,
    pub allocation: Allocation,
    pub welfare: f64,
    pub distance: f64,
    pub trials: Vec<DeltaTrial>,
}

/// Tries every threshold and keeps the feasible allocation of highest
/// welfare, preferring the smallest threshold on ties.
pub fn search_delta(
    s: &Scenario,
    opts: &ClearingOptions,
    phase1: &Pseudoequilibrium,
    deltas: &[f64],
    params: &SimplexParams,
) -> Result<DeltaChoice, MarkupError> {
    if deltas.is_empty() {
        return Err(MarkupError::EmptyCandidates("threshold"));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let runs: Vec<(f64, Option<Allocation>)> = sorted
        .par_iter()
        .map(|&d| -> Result<_, MarkupError> {
            let u = round_threshold(&phase1.commitment, d)?;
            match residual_clear_from(s, opts, &u, params, phase1.basis.as_ref()) {
                Ok(a) => Ok((d, Some(a))),
                Err(MarkupError::ResidualInfeasible) => Ok((d, None)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_, _>>()?;

    let mut trials = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, (delta, a)) in runs.iter().enumerate() {
        let w = a.as_ref().map(|a| welfare(a, s));
        let distance = a.as_ref().map(|a| allocation_distance(a, &phase1.allocation));
        tracing::info!(alpha = phase1.alpha(), delta, feasible = a.is_some(), welfare = w, distance, "threshold trial");
        trials.push(DeltaTrial { delta: *delta, feasible: a.is_some(), welfare: w, distance });
        if let Some(w) = w {
            let better = match best {
                None => true,
                Some((_, bw)) => w > bw + 1e-9 * bw.abs().max(1.0),
            };
            if better {
                best = Some((i, w));
            }
        }
    }
    let Some((i, w)) = best else { return Err(MarkupError::AllDeltasInfeasible(sorted)) };
    let (delta, allocation) = runs.into_iter().nth(i).expect("index of a recorded run");
    let allocation = allocation.expect("best run is feasible");
    Ok(DeltaChoice { delta, distance: trials[i].distance.unwrap_or(0.0), allocation, welfare: w, trials })
}

/// Rounds by branch-and-bound over the fractional commitments only.
pub fn milp_round(
    s: &Scenario,
    opts: &ClearingOptions,
    phase1: &Pseudoequilibrium,
    cfg: &MilpConfig,
) -> Result<Allocation, MarkupError> {
    let inst = build_rc_milp(s, opts, &phase1.integral)?;
    let sol = solve_milp(&inst, cfg)?;
    match (sol.status, sol.incumbent) {
        (MilpStatus::Infeasible, _) => Err(MarkupError::ResidualInfeasible),
        (_, Some(x)) => Ok(Allocation::from_solution(s, &inst, &x)),
        (_, None) => Err(MarkupError::RoundingLimit),
    }
}

/// A phase-2 allocation with the threshold that produced it, if any.
#[derive(Debug, Clone)]
pub struct Rounded {
    pub allocation: Allocation,
    pub delta: Option<f64>,
    pub distance: f64,
}

/// Strategy for turning a pseudoequilibrium into an integral allocation.
pub trait RoundingRule: Send + Sync {
    fn name(&self) -> &'static str;

    fn round(
        &self,
        s: &Scenario,
        opts: &ClearingOptions,
        phase1: &Pseudoequilibrium,
        cfg: &MilpConfig,
    ) -> Result<Rounded, MarkupError>;
}

#[derive(Debug, Clone)]
pub struct ThresholdRounding {
    pub deltas: Vec<f64>,
}

impl Default for ThresholdRounding {
    fn default() -> Self {
        ThresholdRounding { deltas: DEFAULT_DELTAS.to_vec() }
    }
}

impl RoundingRule for ThresholdRounding {
    fn name(&self) -> &'static str {
        "threshold"
    }

    fn round(
        &self,
        s: &Scenario,
        opts: &ClearingOptions,
        phase1: &Pseudoequilibrium,
        cfg: &MilpConfig,
    ) -> Result<Rounded, MarkupError> {
        let c = search_delta(s, opts, phase1, &self.deltas, &cfg.lp)?;
        Ok(Rounded { allocation: c.allocation, delta: Some(c.delta), distance: c.distance })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MilpRounding;

impl RoundingRule for MilpRounding {
    fn name(&self) -> &'static str {
        "milp"
    }

    fn round(
        &self,
        s: &Scenario,
        opts: &ClearingOptions,
        phase1: &Pseudoequilibrium,
        cfg: &MilpConfig,
    ) -> Result<Rounded, MarkupError> {
        let allocation = milp_round(s, opts, phase1, cfg)?;
        let distance = allocation_distance(&allocation, &phase1.allocation);
        tracing::info!(alpha = phase1.alpha(), distance, "milp rounding");
        Ok(Rounded { allocation, delta: None, distance })
    }
}

#[derive(Clone)]
pub struct MarkupConfig {
    /// Ascending markup candidates.
    pub alphas: Vec<f64>,
    pub rounding: Arc<dyn RoundingRule>,
    pub balance: BalanceMode,
    pub auctioneer_demand: f64,
    pub oversupply_cap: Option<f64>,
    pub milp: MilpConfig,
}

impl std::fmt::Debug for MarkupConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarkupConfig")
            .field("alphas", &self.alphas)
            .field("rounding", &self.rounding.name())
            .field("balance", &self.balance)
            .field("auctioneer_demand", &self.auctioneer_demand)
            .field("oversupply_cap", &self.oversupply_cap)
            .finish()
    }
}

impl Default for MarkupConfig {
    fn default() -> Self {
        MarkupConfig {
            alphas: DEFAULT_ALPHAS.to_vec(),
            rounding: Arc::new(ThresholdRounding::default()),
            balance: BalanceMode::Strict,
            auctioneer_demand: 0.0,
            oversupply_cap: None,
            milp: MilpConfig::default(),
        }
    }
}

impl MarkupConfig {
    /// Weak balance with auctioneer demand `r` and the default oversupply cap.
    pub fn weak(r: f64) -> Self {
        let w = ClearingOptions::weak(r);
        MarkupConfig {
            balance: w.balance,
            auctioneer_demand: r,
            oversupply_cap: w.oversupply_cap,
            ..Self::default()
        }
    }

    pub fn phase1_options(&self, alpha: f64) -> ClearingOptions {
        ClearingOptions {
            balance: self.balance,
            auctioneer_demand: self.auctioneer_demand,
            oversupply_cap: self.oversupply_cap,
            alpha,
        }
    }

    /// Residual clearing leaves no auctioneer demand.
    pub fn residual_options(&self, alpha: f64) -> ClearingOptions {
        ClearingOptions { auctioneer_demand: 0.0, ..self.phase1_options(alpha) }
    }
}

/// What happened at one markup candidate.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaTrial {
    pub alpha: f64,
    pub delta: Option<f64>,
    pub welfare: Option<f64>,
    pub mwp_total: Option<f64>,
    pub surplus_before_mwp: Option<f64>,
    pub budget_after_mwp: Option<f64>,
    /// |surplus − α·Σ p x| under strict balance.
    pub identity_residual: Option<f64>,
    pub accepted: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StageTimings {
    pub phase1: Duration,
    pub phase2: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct MarkupOutcome {
    pub allocation: Allocation,
    /// Seller prices; buyers pay `(1 + α)` times these.
    pub prices: PriceSystem,
    pub alpha: f64,
    pub delta: Option<f64>,
    pub rounding: &'static str,
    pub distance: f64,
    pub welfare: f64,
    pub mwps: Vec<f64>,
    pub budget: Budget,
    pub trials: Vec<AlphaTrial>,
    pub timings: StageTimings,
}

impl MarkupOutcome {
    pub fn buyer_price_factor(&self) -> f64 {
        self.prices.buyer_factor()
    }
}

struct Evaluated {
    rounded: Rounded,
    prices: PriceSystem,
    mwps: Vec<f64>,
    budget: Budget,
    welfare: f64,
}

fn evaluate_alpha(
    s: &Scenario,
    cfg: &MarkupConfig,
    alpha: f64,
    warm: &mut Option<Basis>,
    timings: &mut StageTimings,
) -> Result<Evaluated, MarkupError> {
    let t0 = Instant::now();
    let phase1 = solve_phase1_tol(s, &cfg.phase1_options(alpha), &cfg.milp.lp, cfg.milp.int_tol, warm.as_ref())?;
    warm.clone_from(&phase1.basis);
    let t1 = Instant::now();
    timings.phase1 += t1 - t0;
    let rounded = cfg.rounding.round(s, &cfg.residual_options(alpha), &phase1, &cfg.milp);
    timings.phase2 += t1.elapsed();
    let rounded = rounded?;
    let prices = phase1.prices;
    let mwps = seller_mwps(s, &rounded.allocation, &prices);
    let budget = budget_and_oversupply(s, &rounded.allocation, &prices, &mwps);
    let welfare = welfare(&rounded.allocation, s);
    Ok(Evaluated { rounded, prices, mwps, budget, welfare })
}

/// Scans the markup candidates in order and returns the first whose buyers'
/// payments cover seller revenue, transmission settlement and make-whole
/// payments.
pub fn run_markup(s: &Scenario, cfg: &MarkupConfig) -> Result<MarkupOutcome, MarkupError> {
    if cfg.alphas.is_empty() {
        return Err(MarkupError::EmptyCandidates("markup"));
    }
    if cfg.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || cfg.alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MarkupError::UnsortedAlphas);
    }
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let mut trials = Vec::with_capacity(cfg.alphas.len());
    let mut last_err = None;
    // only the objective changes between candidates
    let mut warm = None;
    for &alpha in &cfg.alphas {
        let span = tracing::info_span!("alpha", alpha);
        let _guard = span.enter();
        let mut trial = AlphaTrial {
            alpha,
            delta: None,
            welfare: None,
            mwp_total: None,
            surplus_before_mwp: None,
            budget_after_mwp: None,
            identity_residual: None,
            accepted: false,
            note: None,
        };
        let ev = match evaluate_alpha(s, cfg, alpha, &mut warm, &mut timings) {
            Ok(ev) => ev,
            Err(e) if e.is_infeasibility() || e.is_limit() => {
                tracing::info!(error = %e, "candidate rejected");
                trial.note = Some(e.to_string());
                trials.push(trial);
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let b = ev.budget;
        let after = b.surplus_before_mwp - b.mwp_total;
        let scale = b.buyer_payments.abs().max(1.0);
        trial.delta = ev.rounded.delta;
        trial.welfare = Some(ev.welfare);
        trial.mwp_total = Some(b.mwp_total);
        trial.surplus_before_mwp = Some(b.surplus_before_mwp);
        trial.budget_after_mwp = Some(after);
        if cfg.balance == BalanceMode::Strict {
            trial.identity_residual = Some((b.surplus_before_mwp - markup_revenue(s, &ev.rounded.allocation, &ev.prices)).abs());
        }
        trial.accepted = after >= -BUDGET_TOL * scale;
        tracing::info!(
            delta = ev.rounded.delta,
            welfare = ev.welfare,
            mwp = b.mwp_total,
            budget_after_mwp = after,
            accepted = trial.accepted,
            "candidate evaluated"
        );
        let accepted = trial.accepted;
        trials.push(trial);
        if accepted {
            timings.total = start.elapsed();
            return Ok(MarkupOutcome {
                allocation: ev.rounded.allocation,
                alpha,
                delta: ev.rounded.delta,
                rounding: cfg.rounding.name(),
                distance: ev.rounded.distance,
                welfare: ev.welfare,
                prices: ev.prices,
                mwps: ev.mwps,
                budget: b,
                trials,
                timings,
            });
        }
    }
    // a single failure mode shared by every candidate is more useful than the list
    match last_err {
        Some(e) if trials.iter().all(|t| t.note.as_deref() == Some(e.to_string().as_str())) => Err(e),
        _ => Err(MarkupError::NoAlpha(trials)),
    }
}

#[cfg(test)]
mod tests;

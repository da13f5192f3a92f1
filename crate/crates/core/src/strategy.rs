//! Clearing pipelines selectable by name at runtime.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::allocation::Allocation;
use crate::formulation::{build_dcopf_milp, BalanceMode, ClearingOptions, FormulationError};
use crate::markup::{
    run_markup, AlphaTrial, MarkupConfig, MarkupError, MilpRounding, RoundingRule, StageTimings, ThresholdRounding,
    DEFAULT_ALPHAS,
};
use crate::metrics::{budget_and_oversupply, gloc, ip_prices, seller_mwps, welfare, Budget, MetricError, PriceSystem};
use crate::milp::{solve_milp, MilpConfig, MilpError, MilpStatus};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("unknown clearing mode `{0}` (known: {1})")]
    Unknown(String, String),
    #[error("unknown rounding rule `{0}`")]
    UnknownRounding(String),
    #[error("invalid configuration for `{mode}`: {message}")]
    Config { mode: &'static str, message: String },
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Markup(#[from] MarkupError),
}

/// Settings shared by every pipeline. Fields that do not apply to a mode
/// must stay at their defaults.
#[derive(Debug, Clone)]
pub struct ClearContext {
    pub balance: BalanceMode,
    pub auctioneer_demand: f64,
    pub oversupply_cap: Option<f64>,
    pub alphas: Vec<f64>,
    /// Only meaningful for threshold rounding; `None` selects the defaults.
    pub deltas: Option<Vec<f64>>,
    pub milp: MilpConfig,
}

impl Default for ClearContext {
    fn default() -> Self {
        ClearContext {
            balance: BalanceMode::Strict,
            auctioneer_demand: 0.0,
            oversupply_cap: None,
            alphas: DEFAULT_ALPHAS.to_vec(),
            deltas: None,
            milp: MilpConfig::default(),
        }
    }
}

impl ClearContext {
    pub fn options(&self) -> ClearingOptions {
        ClearingOptions {
            balance: self.balance,
            auctioneer_demand: self.auctioneer_demand,
            oversupply_cap: self.oversupply_cap,
            alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Infeasible,
    LimitReached,
}

/// Everything a pipeline produced; infeasible runs carry no allocation.
#[derive(Debug, Clone)]
pub struct ClearingRun {
    pub algorithm: &'static str,
    pub balance: BalanceMode,
    pub status: RunStatus,
    pub allocation: Option<Allocation>,
    pub prices: Option<PriceSystem>,
    pub alpha: f64,
    pub delta: Option<f64>,
    pub welfare: Option<f64>,
    pub mwps: Vec<f64>,
    /// Per-seller lost opportunity costs, when the pipeline computes them.
    pub glocs: Vec<f64>,
    pub budget: Option<Budget>,
    /// Relative optimality gap of an exact solve.
    pub gap: Option<f64>,
    /// Distance between the rounded and the relaxed allocation.
    pub distance: Option<f64>,
    pub trials: Vec<AlphaTrial>,
    pub timings: StageTimings,
    pub note: Option<String>,
}

impl ClearingRun {
    fn empty(algorithm: &'static str, balance: BalanceMode, status: RunStatus, note: String) -> Self {
        ClearingRun {
            algorithm,
            balance,
            status,
            allocation: None,
            prices: None,
            alpha: 0.0,
            delta: None,
            welfare: None,
            mwps: Vec::new(),
            glocs: Vec::new(),
            budget: None,
            gap: None,
            distance: None,
            trials: Vec::new(),
            timings: StageTimings::default(),
            note: Some(note),
        }
    }
}

pub trait ClearingStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn validate(&self, ctx: &ClearContext) -> Result<(), StrategyError>;

    fn clear(&self, s: &Scenario, ctx: &ClearContext) -> Result<ClearingRun, StrategyError>;
}

/// Exact welfare maximization priced with IP prices.
#[derive(Debug, Clone, Copy)]
pub struct ExactStrategy {
    name: &'static str,
    /// Also solve each seller's profit problem for lost opportunity costs.
    with_gloc: bool,
}

impl ClearingStrategy for ExactStrategy {
    fn name(&self) -> &'static str {
        self.name
    }

    fn validate(&self, ctx: &ClearContext) -> Result<(), StrategyError> {
        let bad = |m: &str| Err(StrategyError::Config { mode: self.name, message: m.into() });
        if ctx.balance != BalanceMode::Strict {
            return bad("IP pricing requires strict balance");
        }
        if ctx.deltas.is_some() {
            return bad("thresholds apply only to markup-threshold");
        }
        ctx.options().validate()?;
        Ok(())
    }

    fn clear(&self, s: &Scenario, ctx: &ClearContext) -> Result<ClearingRun, StrategyError> {
        self.validate(ctx)?;
        let start = Instant::now();
        let inst = build_dcopf_milp(s, &ctx.options())?;
        let sol = solve_milp(&inst, &ctx.milp)?;
        let solved = Instant::now();
        let mut timings = StageTimings { phase1: solved - start, ..StageTimings::default() };
        let status = match sol.status {
            MilpStatus::Optimal => RunStatus::Ok,
            MilpStatus::Infeasible => RunStatus::Infeasible,
            MilpStatus::LimitReached => RunStatus::LimitReached,
        };
        let Some(x) = sol.incumbent else {
            let note = match status {
                RunStatus::Infeasible => "welfare maximization is infeasible".to_string(),
                _ => format!("stopped after {} nodes without an incumbent", sol.stats.nodes),
            };
            let mut run = ClearingRun::empty(self.name, ctx.balance, status, note);
            run.timings = StageTimings { total: start.elapsed(), ..timings };
            return Ok(run);
        };
        let allocation = Allocation::from_solution(s, &inst, &x);
        let prices = ip_prices(s, &allocation, &ctx.milp.lp)?;
        let mwps = seller_mwps(s, &allocation, &prices);
        let budget = budget_and_oversupply(s, &allocation, &prices, &mwps);
        let glocs = if self.with_gloc {
            (0..s.sellers.len()).map(|si| gloc(s, si, &allocation, &prices, &ctx.milp)).collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };
        timings.phase2 = solved.elapsed();
        timings.total = start.elapsed();
        tracing::info!(nodes = sol.stats.nodes, gap = sol.gap, mwp = budget.mwp_total, "exact clearing done");
        Ok(ClearingRun {
            algorithm: self.name,
            balance: ctx.balance,
            status,
            welfare: Some(welfare(&allocation, s)),
            allocation: Some(allocation),
            prices: Some(prices),
            alpha: 0.0,
            delta: None,
            mwps,
            glocs,
            budget: Some(budget),
            gap: Some(sol.gap),
            distance: None,
            trials: Vec::new(),
            timings,
            note: None,
        })
    }
}

/// Builds a rounding rule from its registered name.
pub fn rounding_rule(name: &str, deltas: Option<&[f64]>) -> Result<Arc<dyn RoundingRule>, StrategyError> {
    match name {
        "threshold" => Ok(Arc::new(match deltas {
            Some(d) => ThresholdRounding { deltas: d.to_vec() },
            None => ThresholdRounding::default(),
        })),
        "milp" => Ok(Arc::new(MilpRounding)),
        other => Err(StrategyError::UnknownRounding(other.into())),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MarkupStrategy {
    name: &'static str,
    rounding: &'static str,
}

impl ClearingStrategy for MarkupStrategy {
    fn name(&self) -> &'static str {
        self.name
    }

    fn validate(&self, ctx: &ClearContext) -> Result<(), StrategyError> {
        if ctx.deltas.is_some() && self.rounding != "threshold" {
            return Err(StrategyError::Config {
                mode: self.name,
                message: "thresholds apply only to markup-threshold".into(),
            });
        }
        if ctx.alphas.is_empty() {
            return Err(StrategyError::Config { mode: self.name, message: "markup candidate set is empty".into() });
        }
        if matches!(&ctx.deltas, Some(d) if d.is_empty() || d.iter().any(|&x| !(x > 0.0 && x <= 1.0))) {
            return Err(StrategyError::Config { mode: self.name, message: "thresholds must lie in (0, 1]".into() });
        }
        ctx.options().validate()?;
        Ok(())
    }

    fn clear(&self, s: &Scenario, ctx: &ClearContext) -> Result<ClearingRun, StrategyError> {
        self.validate(ctx)?;
        let start = Instant::now();
        let cfg = MarkupConfig {
            alphas: ctx.alphas.clone(),
            rounding: rounding_rule(self.rounding, ctx.deltas.as_deref())?,
            balance: ctx.balance,
            auctioneer_demand: ctx.auctioneer_demand,
            oversupply_cap: ctx.oversupply_cap,
            milp: ctx.milp,
        };
        match run_markup(s, &cfg) {
            Ok(out) => Ok(ClearingRun {
                algorithm: self.name,
                balance: ctx.balance,
                status: RunStatus::Ok,
                welfare: Some(out.welfare),
                allocation: Some(out.allocation),
                prices: Some(out.prices),
                alpha: out.alpha,
                delta: out.delta,
                mwps: out.mwps,
                glocs: Vec::new(),
                budget: Some(out.budget),
                gap: None,
                distance: Some(out.distance),
                trials: out.trials,
                timings: out.timings,
                note: None,
            }),
            Err(e) if e.is_infeasibility() || e.is_limit() => {
                let status = if e.is_limit() { RunStatus::LimitReached } else { RunStatus::Infeasible };
                let mut run = ClearingRun::empty(self.name, ctx.balance, status, e.to_string());
                if let MarkupError::NoAlpha(trials) = e {
                    run.trials = trials;
                }
                run.timings.total = start.elapsed();
                Ok(run)
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Named pipelines. The default registry holds `opt`, `ip-price`,
/// `markup-threshold` and `markup-milp`.
#[derive(Clone)]
pub struct Registry {
    strategies: BTreeMap<&'static str, Arc<dyn ClearingStrategy>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry { strategies: BTreeMap::new() }
    }

    pub fn register(&mut self, s: Arc<dyn ClearingStrategy>) {
        self.strategies.insert(s.name(), s);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ClearingStrategy>, StrategyError> {
        self.strategies
            .get(name)
            .cloned()
            .ok_or_else(|| StrategyError::Unknown(name.into(), self.names().join(", ")))
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry::empty();
        r.register(Arc::new(ExactStrategy { name: "opt", with_gloc: false }));
        r.register(Arc::new(ExactStrategy { name: "ip-price", with_gloc: true }));
        r.register(Arc::new(MarkupStrategy { name: "markup-threshold", rounding: "threshold" }));
        r.register(Arc::new(MarkupStrategy { name: "markup-milp", rounding: "milp" }));
        r
    }
}

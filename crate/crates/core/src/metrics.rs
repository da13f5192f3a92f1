//! Prices, utilities, payments and welfare measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::Allocation;
use crate::formulation::{build_dcopf_milp, ClearingOptions, FormulationError};
use crate::lp::{duals_by_tag, solve_lp, LpError, LpStatus, SimplexParams};
use crate::milp::{fix_binaries, solve_milp, MilpConfig, MilpError};
use crate::model::{ProblemBuilder, Relation, RowTag, Sense, VarKind, VarName};
use crate::scenario::Scenario;

/// Congestion checks treat nodal prices within this distance as equal.
pub const PRICE_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("pricing LP with fixed commitments is {0:?}")]
    PricingLp(LpStatus),
    #[error("relative welfare loss undefined for zero optimal welfare")]
    ZeroOptimum,
    #[error("per-agent profit problem for seller {0} ended without a proven optimum")]
    AgentProblem(usize),
}

/// Seller prices per (node, period), node-major, and the buyer markup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSystem {
    pub horizon: usize,
    pub seller: Vec<f64>,
    pub alpha: f64,
}

impl PriceSystem {
    pub fn seller_price(&self, node: usize, period: usize) -> f64 {
        self.seller[node * self.horizon + period]
    }

    pub fn buyer_price(&self, node: usize, period: usize) -> f64 {
        (1.0 + self.alpha) * self.seller_price(node, period)
    }

    pub fn buyer_factor(&self) -> f64 {
        1.0 + self.alpha
    }
}

/// Appendix-style welfare: elastic values minus offer costs minus no-load costs.
pub fn welfare(a: &Allocation, s: &Scenario) -> f64 {
    let mut w = 0.0;
    for (b, buyer) in s.buyers.iter().enumerate() {
        for t in 0..s.horizon {
            for (l, bid) in buyer.bids[t].iter().enumerate() {
                w += bid.v * a.buyer_blocks[b][t][l];
            }
        }
    }
    for si in 0..s.sellers.len() {
        w -= seller_cost(a, s, si);
    }
    w
}

fn seller_cost(a: &Allocation, s: &Scenario, si: usize) -> f64 {
    let sel = &s.sellers[si];
    let mut c = 0.0;
    for t in 0..s.horizon {
        for (l, bid) in sel.bids[t].iter().enumerate() {
            c += bid.c * a.seller_blocks[si][t][l];
        }
        c += sel.no_load * a.commitment[si][t];
    }
    c
}

/// IP prices: duals of the strict balance rows once commitments are fixed at
/// the optimal allocation's values.
pub fn ip_prices(s: &Scenario, opt: &Allocation, params: &SimplexParams) -> Result<PriceSystem, MetricError> {
    let opts = ClearingOptions::strict();
    let inst = build_dcopf_milp(s, &opts)?;
    let mut x = opt.to_columns(&inst, 0.0);
    for j in inst.binaries() {
        x[j] = x[j].round();
    }
    let fixed = fix_binaries(&inst, &x, 1e-6)?;
    let sol = solve_lp(&fixed, params)?;
    if sol.status != LpStatus::Optimal {
        return Err(MetricError::PricingLp(sol.status));
    }
    Ok(PriceSystem { horizon: s.horizon, seller: duals_by_tag(&fixed, &sol, s.num_nodes(), s.horizon)?, alpha: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Agent {
    Buyer(usize),
    Seller(usize),
}

pub fn agent_utility(s: &Scenario, agent: Agent, a: &Allocation, p: &PriceSystem) -> f64 {
    match agent {
        Agent::Buyer(b) => {
            let node = s.buyer_node(b);
            (0..s.horizon)
                .map(|t| {
                    let value: f64 = s.buyers[b].bids[t].iter().zip(&a.buyer_blocks[b][t]).map(|(bid, x)| bid.v * x).sum();
                    value - p.buyer_price(node, t) * a.buyer_total[b][t]
                })
                .sum()
        }
        Agent::Seller(si) => {
            let node = s.seller_node(si);
            let revenue: f64 = (0..s.horizon).map(|t| p.seller_price(node, t) * a.seller_total[si][t]).sum();
            revenue - seller_cost(a, s, si)
        }
    }
}

/// Make-whole payment owed to an agent with the given utility.
pub fn mwp(utility: f64) -> f64 {
    (-utility).max(0.0)
}

/// Per-seller make-whole payments.
pub fn seller_mwps(s: &Scenario, a: &Allocation, p: &PriceSystem) -> Vec<f64> {
    (0..s.sellers.len()).map(|si| mwp(agent_utility(s, Agent::Seller(si), a, p))).collect()
}

/// Best profit seller `si` could earn at prices `p` within its own technical
/// constraints.
pub fn best_response_profit(s: &Scenario, si: usize, p: &PriceSystem, cfg: &MilpConfig) -> Result<f64, MetricError> {
    let sel = &s.sellers[si];
    let node = s.seller_node(si);
    let t_len = s.horizon;
    let mut b = ProblemBuilder::new(Sense::Maximize);
    let mut u = Vec::with_capacity(t_len);
    let mut phi = Vec::new();
    let mut row = 0usize;
    let mut next_row = || {
        row += 1;
        RowTag::Generic(row - 1)
    };
    let mut col = 0usize;
    let mut name = || {
        col += 1;
        VarName::Generic(col - 1)
    };
    for t in 0..t_len {
        let price = p.seller_price(node, t);
        let ut = b.add_var(name(), 0.0, 1.0, VarKind::Binary, -sel.no_load);
        let yt = b.add_var(name(), 0.0, f64::INFINITY, VarKind::Continuous, price);
        let mut agg = vec![(yt, 1.0)];
        for bid in &sel.bids[t] {
            let yl = b.add_var(name(), 0.0, f64::INFINITY, VarKind::Continuous, -bid.c);
            b.add_row(vec![(yl, 1.0), (ut, -bid.q)], Relation::Le, 0.0, next_row());
            agg.push((yl, -1.0));
        }
        b.add_row(agg, Relation::Eq, 0.0, next_row());
        b.add_row(vec![(yt, 1.0), (ut, -sel.pmax[t])], Relation::Le, 0.0, next_row());
        b.add_row(vec![(yt, 1.0), (ut, -sel.pmin[t])], Relation::Ge, 0.0, next_row());
        if sel.min_uptime >= 1 {
            phi.push(b.add_var(name(), 0.0, f64::INFINITY, VarKind::Continuous, 0.0));
        }
        u.push(ut);
    }
    if sel.min_uptime >= 1 {
        for t in 0..t_len {
            let first = (t + 1).saturating_sub(sel.min_uptime);
            let mut terms: Vec<(usize, f64)> = (first..=t).map(|i| (phi[i], 1.0)).collect();
            terms.push((u[t], -1.0));
            b.add_row(terms, Relation::Le, 0.0, next_row());
            let mut terms = vec![(phi[t], 1.0), (u[t], -1.0)];
            if t > 0 {
                terms.push((u[t - 1], 1.0));
            }
            b.add_row(terms, Relation::Ge, 0.0, next_row());
        }
    }
    let inst = b.build().map_err(FormulationError::from)?;
    let sol = solve_milp(&inst, cfg)?;
    sol.objective.filter(|_| sol.status == crate::milp::MilpStatus::Optimal).ok_or(MetricError::AgentProblem(si))
}

/// Global lost opportunity cost of a seller: best achievable profit minus
/// realized profit.
pub fn gloc(s: &Scenario, si: usize, a: &Allocation, p: &PriceSystem, cfg: &MilpConfig) -> Result<f64, MetricError> {
    let best = best_response_profit(s, si, p, cfg)?;
    Ok((best - agent_utility(s, Agent::Seller(si), a, p)).max(0.0))
}

/// Relative welfare loss in percent, measured against |W_opt|.
pub fn rwl(w: f64, w_opt: f64) -> Result<f64, MetricError> {
    if w_opt == 0.0 {
        return Err(MetricError::ZeroOptimum);
    }
    Ok(100.0 * (w_opt - w) / w_opt.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Σ buyer payments at (1+α)p.
    pub buyer_payments: f64,
    /// Σ seller revenue at p.
    pub seller_revenue: f64,
    /// Σ p·(net inflow): the transmission operator's settlement.
    pub transmission: f64,
    pub mwp_total: f64,
    /// Surplus before make-whole payments.
    pub surplus_before_mwp: f64,
    /// Negative values are surpluses.
    pub deficit: f64,
    pub oversupply: f64,
}

pub fn budget_and_oversupply(s: &Scenario, a: &Allocation, p: &PriceSystem, mwps: &[f64]) -> Budget {
    let t_len = s.horizon;
    let mut buyer_payments = 0.0;
    for b in 0..s.buyers.len() {
        let v = s.buyer_node(b);
        buyer_payments += (0..t_len).map(|t| p.buyer_price(v, t) * a.buyer_total[b][t]).sum::<f64>();
    }
    let mut seller_revenue = 0.0;
    for si in 0..s.sellers.len() {
        let v = s.seller_node(si);
        seller_revenue += (0..t_len).map(|t| p.seller_price(v, t) * a.seller_total[si][t]).sum::<f64>();
    }
    let mut transmission = 0.0;
    for v in 0..s.num_nodes() {
        for t in 0..t_len {
            transmission += p.seller_price(v, t) * a.injection(s, v, t);
        }
    }
    let mwp_total: f64 = mwps.iter().sum();
    let surplus = buyer_payments - seller_revenue - transmission;
    Budget {
        buyer_payments,
        seller_revenue,
        transmission,
        mwp_total,
        surplus_before_mwp: surplus,
        deficit: mwp_total - surplus,
        oversupply: a.oversupply(),
    }
}

/// α·Σ p x over buyers: what the surplus must equal under strict balance.
pub fn markup_revenue(s: &Scenario, a: &Allocation, p: &PriceSystem) -> f64 {
    let mut total = 0.0;
    for b in 0..s.buyers.len() {
        let v = s.buyer_node(b);
        total += (0..s.horizon).map(|t| p.seller_price(v, t) * a.buyer_total[b][t]).sum::<f64>();
    }
    p.alpha * total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineSignal {
    pub line: usize,
    pub period: usize,
    pub flow: f64,
    /// Flow sits at one of its limits.
    pub binding: bool,
    /// p(to) − p(from).
    pub price_spread: f64,
}

/// Per line and period: whether the flow limit binds and the nodal price
/// spread across the line.
pub fn congestion_signals(s: &Scenario, a: &Allocation, p: &PriceSystem, flow_tol: f64) -> Vec<LineSignal> {
    let ends = s.line_endpoints();
    let mut out = Vec::new();
    for (e, (line, &(from, to))) in s.network.lines.iter().zip(&ends).enumerate() {
        for t in 0..s.horizon {
            let f = a.flows[e][t];
            let binding = f >= line.fmax - flow_tol || f <= line.fmin + flow_tol;
            out.push(LineSignal {
                line: e,
                period: t,
                flow: f,
                binding,
                price_spread: p.seller_price(to, t) - p.seller_price(from, t),
            });
        }
    }
    out
}

/// True when no non-binding line carries a price spread above `price_tol`.
pub fn congestion_consistent(signals: &[LineSignal], price_tol: f64) -> bool {
    signals.iter().all(|l| l.binding || l.price_spread.abs() <= price_tol)
}

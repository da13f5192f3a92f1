//! Scenario → clearing problem.
//!
//! All builders share one layout. Per period `t`:
//!
//! | row family          | count                       |
//! |---------------------|-----------------------------|
//! | node balance        | `V`                         |
//! | flow definition     | `E`                         |
//! | buyer aggregate     | `B`                         |
//! | seller block cap    | `Σ_s L_st` (offer blocks)   |
//! | seller aggregate    | `S`                         |
//! | seller max / min    | `2 S`                       |
//! | min-uptime, startup | `2 S_u` (sellers with uptime ≥ 1) |
//!
//! plus one oversupply cap row in weak mode when a cap is set. See
//! [`expected_row_count`].
//!
//! Node balance is written demand-side, `Σx − Σy − inj + σ = −R`, where
//! `inj` is the net line inflow and `σ ≥ 0` (weak mode only) is excess supply
//! beyond the auctioneer demand `R`. With this orientation the row dual is the
//! nodal seller price itself. The startup history is cold: `u_{s,-1} = 0`.

use thiserror::Error;

use crate::model::{ModelError, ProblemBuilder, ProblemInstance, Relation, RowTag, Sense, VarKind, VarName};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    Strict,
    Weak,
}

impl std::fmt::Display for BalanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BalanceMode::Strict => "strict",
            BalanceMode::Weak => "weak",
        })
    }
}

pub const DEFAULT_OVERSUPPLY_CAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClearingOptions {
    pub balance: BalanceMode,
    /// Auctioneer demand per node and period.
    pub auctioneer_demand: f64,
    /// Total excess supply allowed as a fraction of total consumption.
    pub oversupply_cap: Option<f64>,
    pub alpha: f64,
}

impl ClearingOptions {
    pub fn strict() -> Self {
        ClearingOptions { balance: BalanceMode::Strict, auctioneer_demand: 0.0, oversupply_cap: None, alpha: 0.0 }
    }

    pub fn weak(auctioneer_demand: f64) -> Self {
        ClearingOptions {
            balance: BalanceMode::Weak,
            auctioneer_demand,
            oversupply_cap: Some(DEFAULT_OVERSUPPLY_CAP),
            alpha: 0.0,
        }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        ClearingOptions { alpha, ..self }
    }

    pub fn validate(&self) -> Result<(), FormulationError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(FormulationError::Options(format!("markup must be a finite value >= 0, got {}", self.alpha)));
        }
        if !(self.auctioneer_demand >= 0.0 && self.auctioneer_demand.is_finite()) {
            return Err(FormulationError::Options("auctioneer demand must be >= 0".into()));
        }
        if self.balance == BalanceMode::Strict {
            if self.auctioneer_demand > 0.0 {
                return Err(FormulationError::Options("auctioneer demand requires weak balance".into()));
            }
            if self.oversupply_cap.is_some() {
                return Err(FormulationError::Options("oversupply cap requires weak balance".into()));
            }
        }
        if let Some(c) = self.oversupply_cap {
            if !(c >= 0.0) {
                return Err(FormulationError::Options("oversupply cap must be >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("invalid clearing options: {0}")]
    Options(String),
    #[error("scenario is invalid: {0}")]
    Scenario(String),
    #[error("commitment vector has {got} entries, expected {want} (sellers x periods)")]
    CommitmentLength { got: usize, want: usize },
    #[error("commitment of seller {seller} in period {period} is {value}, expected 0 or 1")]
    NonBinary { seller: usize, period: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the commitment columns of one (seller, period) are modelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Commitment {
    Binary,
    Relaxed,
    Fixed(f64),
}

fn check_scenario(s: &Scenario) -> Result<(), FormulationError> {
    let errors: Vec<String> = crate::scenario::validate(s)
        .into_iter()
        .filter(|v| v.severity == crate::scenario::Severity::Error)
        .map(|v| format!("{} at {}", v.rule, v.path))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(FormulationError::Scenario(errors.join(", ")))
    }
}

/// Seller-major index of (seller, period) pairs.
pub fn commitment_slot(s: &Scenario, seller: usize, period: usize) -> usize {
    seller * s.horizon + period
}

/// The full welfare-maximization MILP. Sellers whose commitment affects
/// nothing (no no-load cost, minimum output or uptime) keep a continuous
/// commitment column, since any optimum can set it to one.
pub fn build_dcopf_milp(s: &Scenario, opts: &ClearingOptions) -> Result<ProblemInstance, FormulationError> {
    let commit: Vec<Commitment> = s
        .sellers
        .iter()
        .flat_map(|sel| {
            let c = if sel.is_commitment_free() { Commitment::Relaxed } else { Commitment::Binary };
            std::iter::repeat_n(c, s.horizon)
        })
        .collect();
    build(s, opts, &commit, 1.0)
}

/// Convexified scaled problem: commitments relaxed to `[0, 1]` and buyer
/// values divided by `1 + α`.
pub fn build_cswmp(s: &Scenario, opts: &ClearingOptions) -> Result<ProblemInstance, FormulationError> {
    let commit = vec![Commitment::Relaxed; s.sellers.len() * s.horizon];
    build(s, opts, &commit, 1.0 / (1.0 + opts.alpha))
}

fn check_binary(s: &Scenario, slot: usize, v: f64) -> Result<f64, FormulationError> {
    if v == 0.0 || v == 1.0 {
        Ok(v)
    } else {
        Err(FormulationError::NonBinary { seller: slot / s.horizon, period: slot % s.horizon, value: v })
    }
}

/// Residual clearing with every commitment fixed; the scaled objective is
/// kept.
pub fn build_rc_delta(s: &Scenario, opts: &ClearingOptions, fixed_u: &[f64]) -> Result<ProblemInstance, FormulationError> {
    let want = s.sellers.len() * s.horizon;
    if fixed_u.len() != want {
        return Err(FormulationError::CommitmentLength { got: fixed_u.len(), want });
    }
    let commit = fixed_u
        .iter()
        .enumerate()
        .map(|(k, &v)| check_binary(s, k, v).map(Commitment::Fixed))
        .collect::<Result<Vec<_>, _>>()?;
    build(s, opts, &commit, 1.0 / (1.0 + opts.alpha))
}

/// Residual clearing where commitments known to be integral are fixed and
/// the rest are binary.
pub fn build_rc_milp(
    s: &Scenario,
    opts: &ClearingOptions,
    integral_u: &[Option<f64>],
) -> Result<ProblemInstance, FormulationError> {
    let want = s.sellers.len() * s.horizon;
    if integral_u.len() != want {
        return Err(FormulationError::CommitmentLength { got: integral_u.len(), want });
    }
    let commit = integral_u
        .iter()
        .enumerate()
        .map(|(k, v)| match v {
            Some(v) => check_binary(s, k, *v).map(Commitment::Fixed),
            None => Ok(Commitment::Binary),
        })
        .collect::<Result<Vec<_>, _>>()?;
    build(s, opts, &commit, 1.0 / (1.0 + opts.alpha))
}

/// Closed-form row count of any builder's output.
pub fn expected_row_count(s: &Scenario, opts: &ClearingOptions) -> usize {
    let t = s.horizon;
    let blocks: usize = s.sellers.iter().flat_map(|x| x.bids.iter().map(Vec::len)).sum();
    let with_uptime = s.sellers.iter().filter(|x| x.min_uptime >= 1).count();
    let cap = usize::from(opts.balance == BalanceMode::Weak && opts.oversupply_cap.is_some());
    t * (s.num_nodes() + s.network.lines.len() + s.buyers.len() + 3 * s.sellers.len() + 2 * with_uptime) + blocks + cap
}

/// Generic builder. `value_scale` multiplies every buyer block value.
pub fn build(
    s: &Scenario,
    opts: &ClearingOptions,
    commit: &[Commitment],
    value_scale: f64,
) -> Result<ProblemInstance, FormulationError> {
    opts.validate()?;
    check_scenario(s)?;
    let want = s.sellers.len() * s.horizon;
    if commit.len() != want {
        return Err(FormulationError::CommitmentLength { got: commit.len(), want });
    }
    let t_len = s.horizon;
    let nv = s.num_nodes();
    let weak = opts.balance == BalanceMode::Weak;
    let ends = s.line_endpoints();
    let node_of = s.node_index();
    let reference = node_of[&s.network.reference];
    let mut b = ProblemBuilder::new(Sense::Maximize);

    // columns
    let mut x_tot = vec![vec![0usize; t_len]; s.buyers.len()];
    let mut x_blk = vec![vec![Vec::new(); t_len]; s.buyers.len()];
    for (bi, buyer) in s.buyers.iter().enumerate() {
        for t in 0..t_len {
            for (l, bid) in buyer.bids[t].iter().enumerate() {
                let c = b.add_var(
                    VarName::BuyerBlock { buyer: bi, period: t, block: l },
                    0.0,
                    bid.q,
                    VarKind::Continuous,
                    value_scale * bid.v,
                );
                x_blk[bi][t].push(c);
            }
            x_tot[bi][t] =
                b.add_var(VarName::BuyerTotal { buyer: bi, period: t }, 0.0, buyer.dmax[t], VarKind::Continuous, 0.0);
        }
    }
    let mut y_tot = vec![vec![0usize; t_len]; s.sellers.len()];
    let mut y_blk = vec![vec![Vec::new(); t_len]; s.sellers.len()];
    let mut u = vec![vec![0usize; t_len]; s.sellers.len()];
    let mut phi = vec![Vec::new(); s.sellers.len()];
    for (si, sel) in s.sellers.iter().enumerate() {
        for t in 0..t_len {
            for (l, bid) in sel.bids[t].iter().enumerate() {
                let c = b.add_var(
                    VarName::SellerBlock { seller: si, period: t, block: l },
                    0.0,
                    f64::INFINITY,
                    VarKind::Continuous,
                    -bid.c,
                );
                y_blk[si][t].push(c);
            }
            y_tot[si][t] =
                b.add_var(VarName::SellerTotal { seller: si, period: t }, 0.0, f64::INFINITY, VarKind::Continuous, 0.0);
            let (lo, hi, kind) = match commit[si * t_len + t] {
                Commitment::Binary => (0.0, 1.0, VarKind::Binary),
                Commitment::Relaxed => (0.0, 1.0, VarKind::Continuous),
                Commitment::Fixed(v) => (v, v, VarKind::Continuous),
            };
            u[si][t] = b.add_var(VarName::Commitment { seller: si, period: t }, lo, hi, kind, -sel.no_load);
            if sel.min_uptime >= 1 {
                phi[si].push(b.add_var(
                    VarName::Startup { seller: si, period: t },
                    0.0,
                    f64::INFINITY,
                    VarKind::Continuous,
                    0.0,
                ));
            }
        }
    }
    let has_lines = !s.network.lines.is_empty();
    let mut theta = vec![vec![0usize; t_len]; nv];
    if has_lines {
        for (v, row) in theta.iter_mut().enumerate() {
            for (t, slot) in row.iter_mut().enumerate() {
                let (lo, hi) = if v == reference { (0.0, 0.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
                *slot = b.add_var(VarName::Angle { node: v, period: t }, lo, hi, VarKind::Continuous, 0.0);
            }
        }
    }
    let mut flow = vec![vec![0usize; t_len]; ends.len()];
    for (e, line) in s.network.lines.iter().enumerate() {
        for t in 0..t_len {
            flow[e][t] = b.add_var(VarName::Flow { line: e, period: t }, line.fmin, line.fmax, VarKind::Continuous, 0.0);
        }
    }
    let mut sigma = vec![vec![0usize; t_len]; nv];
    if weak {
        for (v, row) in sigma.iter_mut().enumerate() {
            for (t, slot) in row.iter_mut().enumerate() {
                *slot = b.add_var(VarName::Excess { node: v, period: t }, 0.0, f64::INFINITY, VarKind::Continuous, 0.0);
            }
        }
    }

    // node balance
    let buyer_nodes: Vec<usize> = s.buyers.iter().map(|x| node_of[&x.node]).collect();
    let seller_nodes: Vec<usize> = s.sellers.iter().map(|x| node_of[&x.node]).collect();
    let rhs = if weak { -opts.auctioneer_demand } else { 0.0 };
    for v in 0..nv {
        for t in 0..t_len {
            let mut terms = Vec::new();
            for (bi, &n) in buyer_nodes.iter().enumerate() {
                if n == v {
                    terms.push((x_tot[bi][t], 1.0));
                }
            }
            for (si, &n) in seller_nodes.iter().enumerate() {
                if n == v {
                    terms.push((y_tot[si][t], -1.0));
                }
            }
            for (e, &(from, to)) in ends.iter().enumerate() {
                if to == v {
                    terms.push((flow[e][t], -1.0));
                }
                if from == v {
                    terms.push((flow[e][t], 1.0));
                }
            }
            if weak {
                terms.push((sigma[v][t], 1.0));
            }
            b.add_row(terms, Relation::Eq, rhs, RowTag::NodeBalance { node: v, period: t });
        }
    }
    for (e, (line, &(from, to))) in s.network.lines.iter().zip(&ends).enumerate() {
        for t in 0..t_len {
            b.add_row(
                vec![(flow[e][t], 1.0), (theta[from][t], -line.susceptance), (theta[to][t], line.susceptance)],
                Relation::Eq,
                0.0,
                RowTag::FlowDefinition { line: e, period: t },
            );
        }
    }
    for (bi, buyer) in s.buyers.iter().enumerate() {
        for t in 0..t_len {
            let mut terms = vec![(x_tot[bi][t], 1.0)];
            terms.extend(x_blk[bi][t].iter().map(|&c| (c, -1.0)));
            b.add_row(terms, Relation::Eq, buyer.inelastic[t], RowTag::BuyerAggregate { buyer: bi, period: t });
        }
    }
    for (si, sel) in s.sellers.iter().enumerate() {
        for t in 0..t_len {
            for (l, bid) in sel.bids[t].iter().enumerate() {
                b.add_row(
                    vec![(y_blk[si][t][l], 1.0), (u[si][t], -bid.q)],
                    Relation::Le,
                    0.0,
                    RowTag::SellerBlockCap { seller: si, period: t, block: l },
                );
            }
            let mut terms = vec![(y_tot[si][t], 1.0)];
            terms.extend(y_blk[si][t].iter().map(|&c| (c, -1.0)));
            b.add_row(terms, Relation::Eq, 0.0, RowTag::SellerAggregate { seller: si, period: t });
            b.add_row(
                vec![(y_tot[si][t], 1.0), (u[si][t], -sel.pmax[t])],
                Relation::Le,
                0.0,
                RowTag::SellerMaxOutput { seller: si, period: t },
            );
            b.add_row(
                vec![(y_tot[si][t], 1.0), (u[si][t], -sel.pmin[t])],
                Relation::Ge,
                0.0,
                RowTag::SellerMinOutput { seller: si, period: t },
            );
        }
        if sel.min_uptime >= 1 {
            let r = sel.min_uptime;
            for t in 0..t_len {
                let first = (t + 1).saturating_sub(r);
                let mut terms: Vec<(usize, f64)> = (first..=t).map(|i| (phi[si][i], 1.0)).collect();
                terms.push((u[si][t], -1.0));
                b.add_row(terms, Relation::Le, 0.0, RowTag::MinUptime { seller: si, period: t });
                let mut terms = vec![(phi[si][t], 1.0), (u[si][t], -1.0)];
                if t > 0 {
                    terms.push((u[si][t - 1], 1.0));
                }
                b.add_row(terms, Relation::Ge, 0.0, RowTag::StartupDefinition { seller: si, period: t });
            }
        }
    }
    if weak {
        if let Some(frac) = opts.oversupply_cap {
            let mut terms: Vec<(usize, f64)> = sigma.iter().flatten().map(|&c| (c, 1.0)).collect();
            terms.extend(x_tot.iter().flatten().map(|&c| (c, -frac)));
            b.add_row(terms, Relation::Le, 0.0, RowTag::OversupplyCap);
        }
    }
    Ok(b.build()?)
}

#[cfg(test)]
mod tests;

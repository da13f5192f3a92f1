//! Clearing outcomes in scenario terms.

use serde::{Deserialize, Serialize};

use crate::formulation::{build_dcopf_milp, ClearingOptions};
use crate::model::{ProblemInstance, VarName};
use crate::scenario::Scenario;

/// Quantities indexed `[agent][period]` (and `[block]` for bid blocks);
/// network quantities `[line][period]` and `[node][period]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub horizon: usize,
    pub buyer_blocks: Vec<Vec<Vec<f64>>>,
    pub buyer_total: Vec<Vec<f64>>,
    pub seller_blocks: Vec<Vec<Vec<f64>>>,
    pub seller_total: Vec<Vec<f64>>,
    pub commitment: Vec<Vec<f64>>,
    pub startup: Vec<Vec<f64>>,
    pub flows: Vec<Vec<f64>>,
    pub angles: Vec<Vec<f64>>,
    /// Nodal supply minus demand plus net line inflow.
    pub excess: Vec<Vec<f64>>,
}

fn get(inst: &ProblemInstance, x: &[f64], name: VarName) -> f64 {
    inst.column(&name).map_or(0.0, |c| x[c])
}

impl Allocation {
    /// Read an allocation off a primal vector of any builder's instance.
    pub fn from_solution(s: &Scenario, inst: &ProblemInstance, x: &[f64]) -> Allocation {
        let t_len = s.horizon;
        let periods = |f: &dyn Fn(usize) -> f64| (0..t_len).map(f).collect::<Vec<f64>>();
        let buyer_blocks = s
            .buyers
            .iter()
            .enumerate()
            .map(|(b, buyer)| {
                (0..t_len)
                    .map(|t| {
                        (0..buyer.bids[t].len())
                            .map(|l| get(inst, x, VarName::BuyerBlock { buyer: b, period: t, block: l }))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let buyer_total =
            (0..s.buyers.len()).map(|b| periods(&|t| get(inst, x, VarName::BuyerTotal { buyer: b, period: t }))).collect();
        let seller_blocks = s
            .sellers
            .iter()
            .enumerate()
            .map(|(si, sel)| {
                (0..t_len)
                    .map(|t| {
                        (0..sel.bids[t].len())
                            .map(|l| get(inst, x, VarName::SellerBlock { seller: si, period: t, block: l }))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let seller_total = (0..s.sellers.len())
            .map(|si| periods(&|t| get(inst, x, VarName::SellerTotal { seller: si, period: t })))
            .collect();
        let commitment = s
            .sellers
            .iter()
            .enumerate()
            .map(|(si, sel)| {
                if sel.is_commitment_free() {
                    vec![1.0; t_len]
                } else {
                    periods(&|t| get(inst, x, VarName::Commitment { seller: si, period: t }))
                }
            })
            .collect();
        let startup = (0..s.sellers.len())
            .map(|si| periods(&|t| get(inst, x, VarName::Startup { seller: si, period: t })))
            .collect();
        let flows = (0..s.network.lines.len())
            .map(|e| periods(&|t| get(inst, x, VarName::Flow { line: e, period: t })))
            .collect();
        let angles =
            (0..s.num_nodes()).map(|v| periods(&|t| get(inst, x, VarName::Angle { node: v, period: t }))).collect();
        let mut a = Allocation {
            horizon: t_len,
            buyer_blocks,
            buyer_total,
            seller_blocks,
            seller_total,
            commitment,
            startup,
            flows,
            angles,
            excess: Vec::new(),
        };
        a.excess = (0..s.num_nodes()).map(|v| periods(&|t| a.net_supply(s, v, t))).collect();
        a
    }

    /// Net line inflow into node `v` in period `t`.
    pub fn injection(&self, s: &Scenario, v: usize, t: usize) -> f64 {
        s.line_endpoints()
            .iter()
            .enumerate()
            .map(|(e, &(from, to))| {
                let f = self.flows[e][t];
                (if to == v { f } else { 0.0 }) - (if from == v { f } else { 0.0 })
            })
            .sum()
    }

    fn net_supply(&self, s: &Scenario, v: usize, t: usize) -> f64 {
        let node = &s.network.nodes[v];
        let supply: f64 =
            s.sellers.iter().enumerate().filter(|(_, x)| &x.node == node).map(|(i, _)| self.seller_total[i][t]).sum();
        let demand: f64 =
            s.buyers.iter().enumerate().filter(|(_, x)| &x.node == node).map(|(i, _)| self.buyer_total[i][t]).sum();
        supply - demand + self.injection(s, v, t)
    }

    /// Total excess supply over all nodes and periods.
    pub fn oversupply(&self) -> f64 {
        self.excess.iter().flatten().map(|e| e.max(0.0)).sum()
    }

    pub fn total_supply(&self) -> f64 {
        self.seller_total.iter().flatten().sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.buyer_total.iter().flatten().sum()
    }

    /// Commitments flattened seller-major, matching the builders' slot order.
    pub fn commitment_vector(&self) -> Vec<f64> {
        self.commitment.iter().flatten().copied().collect()
    }

    /// Elastic buyer blocks followed by seller blocks: the coordinates in
    /// which rounding distance is measured.
    pub fn coordinates(&self) -> Vec<f64> {
        self.buyer_blocks.iter().chain(&self.seller_blocks).flatten().flatten().copied().collect()
    }

    /// Column vector for `inst` (any builder's output on the same scenario).
    pub fn to_columns(&self, inst: &ProblemInstance, auctioneer_demand: f64) -> Vec<f64> {
        (0..inst.num_vars())
            .map(|c| match inst.index().name(c).expect("column in range") {
                VarName::BuyerBlock { buyer, period, block } => self.buyer_blocks[buyer][period][block],
                VarName::BuyerTotal { buyer, period } => self.buyer_total[buyer][period],
                VarName::SellerBlock { seller, period, block } => self.seller_blocks[seller][period][block],
                VarName::SellerTotal { seller, period } => self.seller_total[seller][period],
                VarName::Commitment { seller, period } => self.commitment[seller][period],
                VarName::Startup { seller, period } => self.startup[seller][period],
                VarName::Angle { node, period } => self.angles[node][period],
                VarName::Flow { line, period } => self.flows[line][period],
                VarName::Excess { node, period } => self.excess[node][period] - auctioneer_demand,
                VarName::Generic(_) => 0.0,
            })
            .collect()
    }

    /// Largest violation of the welfare-maximization MILP's rows, bounds and
    /// integrality under `opts`.
    pub fn max_violation(&self, s: &Scenario, opts: &ClearingOptions) -> f64 {
        let Ok(inst) = build_dcopf_milp(s, opts) else { return f64::INFINITY };
        let x = self.to_columns(&inst, opts.auctioneer_demand);
        inst.max_violation(&x).max(inst.max_integrality_violation(&x))
    }
}

/// Euclidean distance between two allocations' coordinates.
pub fn allocation_distance(a: &Allocation, b: &Allocation) -> f64 {
    a.coordinates().iter().zip(b.coordinates()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

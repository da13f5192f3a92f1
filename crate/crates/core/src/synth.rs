//! Seeded synthetic scenarios for oracle tests and timing runs.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::scenario::{Buyer, BuyerBid, Id, Line, Network, Scenario, Seller, SellerBid};

fn node_id(v: usize) -> Id {
    Id(format!("v{v}"))
}

/// Spanning tree over `n` nodes (each node hangs off an earlier one) plus
/// `extra` chords.
fn network(rng: &mut impl Rng, n: usize, extra: usize, cap: (f64, f64)) -> Network {
    let mut lines = Vec::new();
    let mut pairs = Vec::new();
    for v in 1..n {
        let w = rng.random_range(0..v);
        pairs.push((w, v));
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && !pairs.contains(&(a.min(b), a.max(b))) {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    for (a, b) in pairs {
        let f = rng.random_range(cap.0..cap.1);
        lines.push(Line { from: node_id(a), to: node_id(b), susceptance: rng.random_range(0.5..2.0), fmin: -f, fmax: f });
    }
    Network { reference: node_id(0), nodes: (0..n).map(node_id).collect(), lines }
}

/// Offer blocks summing to `pmax`, with increasing prices from `base`.
fn seller_blocks(rng: &mut impl Rng, pmax: f64, blocks: usize, base: f64) -> Vec<SellerBid> {
    let mut c = base;
    (0..blocks)
        .map(|_| {
            c += rng.random_range(0.0..10.0);
            SellerBid { q: pmax / blocks as f64, c }
        })
        .collect()
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// A scenario small enough for exhaustive commitment enumeration: at most
/// 3 nodes, 3 sellers and 4 periods, hence at most 12 commitment binaries.
pub fn small_scenario(seed: u64) -> Scenario {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    let horizon = rng.random_range(1..=4);
    let extra = usize::from(n == 3 && rng.random_bool(0.5));
    let network = network(&mut rng, n, extra, (5.0, 40.0));
    let sellers: Vec<Seller> = (0..rng.random_range(1..=3))
        .map(|k| {
            let pmax = round1(rng.random_range(10.0..30.0));
            let pmin = if rng.random_bool(0.7) { round1(rng.random_range(0.0..pmax / 2.0)) } else { 0.0 };
            let no_load = if rng.random_bool(0.8) { round1(rng.random_range(0.0..60.0)) } else { 0.0 };
            let blocks = rng.random_range(1..=2);
            let base = rng.random_range(5.0..40.0);
            let bids = seller_blocks(&mut rng, pmax, blocks, base);
            Seller {
                id: Id(format!("s{k}")),
                node: node_id(rng.random_range(0..n)),
                no_load,
                min_uptime: rng.random_range(0..=horizon.min(3)),
                pmin: vec![pmin; horizon],
                pmax: vec![pmax; horizon],
                bids: vec![bids; horizon],
            }
        })
        .collect();
    let cap: f64 = sellers.iter().map(|s| s.pmax[0]).sum();
    let buyers = (0..rng.random_range(1..=2))
        .map(|k| {
            let inelastic: Vec<f64> = (0..horizon).map(|_| round1(rng.random_range(0.0..cap * 0.4))).collect();
            let q = round1(rng.random_range(0.0..15.0));
            let v = round1(rng.random_range(10.0..80.0));
            Buyer {
                id: Id(format!("b{k}")),
                node: node_id(rng.random_range(0..n)),
                dmax: inelastic.iter().map(|x| x + q).collect(),
                inelastic,
                bids: vec![vec![BuyerBid { q, v }]; horizon],
            }
        })
        .collect();
    Scenario { horizon, network, sellers, buyers }
}

/// A radial network of 2 to 5 nodes with one seller per node and elastic
/// loads at random nodes; line limits are tight enough that some congest.
pub fn radial_scenario(seed: u64) -> Scenario {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let n = rng.random_range(2..=5);
    let network = network(&mut rng, n, 0, (5.0, 60.0));
    let sellers = (0..n)
        .map(|v| {
            let pmax = round1(rng.random_range(20.0..60.0));
            let base = rng.random_range(5.0..50.0);
            Seller {
                id: Id(format!("s{v}")),
                node: node_id(v),
                no_load: round1(rng.random_range(0.0..30.0)),
                min_uptime: 0,
                pmin: vec![round1(rng.random_range(0.0..pmax / 4.0))],
                pmax: vec![pmax],
                bids: vec![seller_blocks(&mut rng, pmax, 2, base)],
            }
        })
        .collect();
    let mut at: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.6)).collect();
    if at.is_empty() {
        at.push(n - 1);
    }
    let buyers = at
        .into_iter()
        .map(|v| {
            let q = round1(rng.random_range(0.0..30.0));
            Buyer {
                id: Id(format!("b{v}")),
                node: node_id(v),
                inelastic: vec![0.0],
                dmax: vec![q],
                bids: vec![vec![BuyerBid { q, v: round1(rng.random_range(30.0..120.0)) }]],
            }
        })
        .collect();
    Scenario { horizon: 1, network, sellers, buyers }
}

/// Desk-scale multi-period scenario: a meshed network, thermal units with
/// minimum output and uptime, renewables without commitment costs, and one
/// load per node following a daily shape.
pub fn large_scenario(nodes: usize, periods: usize, sellers: usize, seed: u64) -> Scenario {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let network = network(&mut rng, nodes, nodes / 5, (150.0, 400.0));
    let shape: Vec<f64> = (0..periods)
        .map(|t| 0.75 + 0.25 * (std::f64::consts::TAU * (t as f64 - 6.0) / 24.0).sin())
        .collect();
    let sellers: Vec<Seller> = (0..sellers)
        .map(|k| {
            let node = node_id(rng.random_range(0..nodes));
            if rng.random_bool(0.25) {
                let pmax = round1(rng.random_range(20.0..80.0));
                let avail: Vec<f64> = (0..periods).map(|_| round1(pmax * rng.random_range(0.2..1.0))).collect();
                let c = rng.random_range(0.0..5.0);
                Seller {
                    id: Id(format!("r{k}")),
                    node,
                    no_load: 0.0,
                    min_uptime: 0,
                    pmin: vec![0.0; periods],
                    bids: avail.iter().map(|&q| vec![SellerBid { q, c }]).collect(),
                    pmax: avail,
                }
            } else {
                let pmax = round1(rng.random_range(50.0..300.0));
                let pmin = round1(pmax * rng.random_range(0.2..0.5));
                let base = rng.random_range(15.0..60.0);
                let bids = seller_blocks(&mut rng, pmax, 3, base);
                Seller {
                    id: Id(format!("g{k}")),
                    node,
                    no_load: round1(rng.random_range(100.0..1500.0)),
                    min_uptime: [1, 4, 6][rng.random_range(0..3)].min(periods),
                    pmin: vec![pmin; periods],
                    pmax: vec![pmax; periods],
                    bids: vec![bids; periods],
                }
            }
        })
        .collect();
    let capacity: f64 = sellers.iter().map(|s| s.pmax.iter().copied().fold(f64::INFINITY, f64::min)).sum();
    let per_node = 0.55 * capacity / nodes as f64;
    let buyers = (0..nodes)
        .map(|v| {
            let scale = rng.random_range(0.5..1.5);
            let q = round1(per_node * scale * 0.3);
            let inelastic: Vec<f64> = shape.iter().map(|f| round1(per_node * scale * 0.6 * f)).collect();
            Buyer {
                id: Id(format!("d{v}")),
                node: node_id(v),
                dmax: inelastic.iter().map(|x| x + q).collect(),
                inelastic,
                bids: vec![vec![BuyerBid { q, v: round1(rng.random_range(60.0..200.0)) }]; periods],
            }
        })
        .collect();
    Scenario { horizon: periods, network, sellers, buyers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{validate, Severity};

    fn valid(s: &Scenario) -> bool {
        validate(s).iter().all(|v| v.severity != Severity::Error)
    }

    #[test]
    fn generated_scenarios_validate() {
        for seed in 0..200 {
            let s = small_scenario(seed);
            assert!(valid(&s), "seed {seed}: {:?}", validate(&s));
            assert!(s.sellers.len() * s.horizon <= 12 && s.num_nodes() <= 3);
            let r = radial_scenario(seed);
            assert!(valid(&r) && r.is_radial());
        }
        let big = large_scenario(50, 24, 100, 7);
        assert!(valid(&big));
        assert_eq!((big.num_nodes(), big.horizon, big.sellers.len()), (50, 24, 100));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(small_scenario(3), small_scenario(3));
        assert_eq!(large_scenario(10, 4, 8, 1), large_scenario(10, 4, 8, 1));
    }
}

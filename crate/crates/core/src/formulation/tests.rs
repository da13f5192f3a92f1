use super::*;
use crate::lp::{solve_lp, LpStatus, SimplexParams};
use crate::milp::{solve_milp, MilpConfig};
use crate::scenario::tests::fixture;
use crate::scenario::{parse_scenario, BuyerBid, SellerBid};

fn example(n: u8) -> Scenario {
    parse_scenario(&fixture(&format!("example{n}.json"))).unwrap()
}

fn val(inst: &ProblemInstance, x: &[f64], name: VarName) -> f64 {
    x[inst.column(&name).unwrap_or_else(|| panic!("{name} missing"))]
}

fn u(seller: usize) -> VarName {
    VarName::Commitment { seller, period: 0 }
}

fn y(seller: usize, block: usize) -> VarName {
    VarName::SellerBlock { seller, period: 0, block }
}

const XB: VarName = VarName::BuyerBlock { buyer: 0, period: 0, block: 0 };

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-7
}

#[test]
fn example_one_cswmp_solution() {
    let s = example(1);
    let inst = build_cswmp(&s, &ClearingOptions::weak(5.0).with_alpha(1.0)).unwrap();
    let sol = solve_lp(&inst, &SimplexParams::default()).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    let x = &sol.primal;
    assert!(close(val(&inst, x, u(0)), 0.5) && close(val(&inst, x, u(1)), 1.0));
    assert!(close(val(&inst, x, y(0, 0)), 5.0) && close(val(&inst, x, y(1, 0)), 8.0));
    assert!(close(val(&inst, x, XB), 0.0));
    let bal = inst.row(&RowTag::NodeBalance { node: 0, period: 0 }).unwrap();
    assert!(close(sol.duals[bal], 5.0), "{}", sol.duals[bal]);
}

#[test]
fn example_two_cswmp_solution() {
    let s = example(2);
    let inst = build_cswmp(&s, &ClearingOptions::weak(5.0).with_alpha(1.0)).unwrap();
    let sol = solve_lp(&inst, &SimplexParams::default()).unwrap();
    let x = &sol.primal;
    assert!(close(val(&inst, x, u(0)), 0.7) && close(val(&inst, x, u(1)), 1.0));
    assert!(close(val(&inst, x, y(0, 0)), 7.0) && close(val(&inst, x, y(1, 0)), 8.0));
}

#[test]
fn example_one_opt_is_minus_thirty() {
    let s = example(1);
    let inst = build_dcopf_milp(&s, &ClearingOptions::strict()).unwrap();
    assert_eq!(inst.binaries().len(), 2);
    let sol = solve_milp(&inst, &MilpConfig::default()).unwrap();
    assert!(close(sol.objective.unwrap(), -30.0));
    let x = sol.incumbent.unwrap();
    assert!(close(val(&inst, &x, u(0)), 1.0) && close(val(&inst, &x, u(1)), 0.0));
    assert!(close(val(&inst, &x, y(0, 0)), 10.0) && close(val(&inst, &x, XB), 2.0));
}

fn feasible_patterns(s: &Scenario, opts: &ClearingOptions) -> Vec<[f64; 2]> {
    let mut feasible = Vec::new();
    for pattern in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
        let inst = build_rc_delta(s, opts, &pattern).unwrap();
        if solve_lp(&inst, &SimplexParams::default()).unwrap().status == LpStatus::Optimal {
            feasible.push(pattern);
        }
    }
    feasible
}

#[test]
fn example_one_feasible_commitments() {
    let s = example(1);
    // both units on produce at least 18 against at most 10 consumed
    assert_eq!(feasible_patterns(&s, &ClearingOptions::strict()), vec![[1.0, 0.0], [0.0, 1.0]]);
    let uncapped = ClearingOptions { oversupply_cap: None, ..ClearingOptions::weak(0.0) };
    assert_eq!(feasible_patterns(&s, &uncapped), vec![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
}

#[test]
fn residual_clearing_examples() {
    let s = example(1);
    let opts = ClearingOptions::weak(0.0).with_alpha(1.0);
    let inst = build_rc_delta(&s, &opts, &[0.0, 1.0]).unwrap();
    let sol = solve_lp(&inst, &SimplexParams::default()).unwrap();
    let x = &sol.primal;
    assert!(close(val(&inst, x, y(1, 0)), 8.0) && close(val(&inst, x, XB), 0.0));
    let unscaled = build_dcopf_milp(&s, &ClearingOptions::weak(0.0)).unwrap();
    assert!(close(unscaled.objective_value(x), -32.0));

    let s2 = example(2);
    let inst = build_rc_delta(&s2, &opts, &[0.0, 1.0]).unwrap();
    let x = solve_lp(&inst, &SimplexParams::default()).unwrap().primal;
    assert!(close(val(&inst, &x, y(1, 0)), 8.0) && close(val(&inst, &x, y(1, 1)), 2.0));

    let none = build_rc_delta(&s, &opts, &[0.0, 0.0]).unwrap();
    assert_eq!(solve_lp(&none, &SimplexParams::default()).unwrap().status, LpStatus::Infeasible);
}

#[test]
fn example_three_needs_small_auctioneer_demand() {
    let s = example(3);
    for alpha in [0.0, 0.01, 0.1] {
        let big = build_cswmp(&s, &ClearingOptions::weak(500.0).with_alpha(alpha)).unwrap();
        assert_eq!(solve_lp(&big, &SimplexParams::default()).unwrap().status, LpStatus::Infeasible);
        let none = build_cswmp(&s, &ClearingOptions::weak(0.0).with_alpha(alpha)).unwrap();
        assert_eq!(solve_lp(&none, &SimplexParams::default()).unwrap().status, LpStatus::Optimal);
    }
    let strict = build_dcopf_milp(&s, &ClearingOptions::strict()).unwrap();
    assert_eq!(solve_lp(&strict, &SimplexParams::default()).unwrap().status, LpStatus::Optimal);
}

#[test]
fn row_counts_follow_formula() {
    for n in 1..=3 {
        let s = example(n);
        for opts in [ClearingOptions::strict(), ClearingOptions::weak(2.0), ClearingOptions { oversupply_cap: None, ..ClearingOptions::weak(0.0) }] {
            let inst = build_dcopf_milp(&s, &opts).unwrap();
            assert_eq!(inst.num_rows(), expected_row_count(&s, &opts));
        }
    }
    let mut s = example(1);
    s.horizon = 3;
    for sel in &mut s.sellers {
        sel.min_uptime = 2;
        sel.no_load = 1.0;
        sel.pmin = vec![sel.pmin[0]; 3];
        sel.pmax = vec![sel.pmax[0]; 3];
        sel.bids = vec![sel.bids[0].clone(); 3];
    }
    for b in &mut s.buyers {
        b.inelastic = vec![b.inelastic[0]; 3];
        b.dmax = vec![b.dmax[0]; 3];
        b.bids = vec![b.bids[0].clone(); 3];
    }
    let inst = build_dcopf_milp(&s, &ClearingOptions::strict()).unwrap();
    assert_eq!(inst.num_rows(), expected_row_count(&s, &ClearingOptions::strict()));
    assert!(inst.row(&RowTag::MinUptime { seller: 1, period: 2 }).is_some());
}

#[test]
fn convex_market_has_no_binaries() {
    let s = Scenario {
        horizon: 1,
        network: crate::scenario::Network { reference: "a".into(), nodes: vec!["a".into()], lines: vec![] },
        sellers: vec![crate::scenario::Seller {
            id: "s".into(),
            node: "a".into(),
            no_load: 0.0,
            min_uptime: 0,
            pmin: vec![0.0],
            pmax: vec![10.0],
            bids: vec![vec![SellerBid { q: 10.0, c: 15.0 }]],
        }],
        buyers: vec![crate::scenario::Buyer {
            id: "b".into(),
            node: "a".into(),
            inelastic: vec![2.0],
            dmax: vec![6.0],
            bids: vec![vec![BuyerBid { q: 4.0, v: 20.0 }]],
        }],
    };
    let inst = build_dcopf_milp(&s, &ClearingOptions::strict()).unwrap();
    assert!(inst.binaries().is_empty());
    let lp = solve_lp(&inst, &SimplexParams::default()).unwrap();
    let milp = solve_milp(&inst, &MilpConfig::default()).unwrap();
    assert!(close(lp.objective, milp.objective.unwrap()));
    assert!(close(lp.objective, 4.0 * 20.0 - 6.0 * 15.0));
}

#[test]
fn zero_markup_cswmp_is_milp_relaxation() {
    let s = example(1);
    let milp = build_dcopf_milp(&s, &ClearingOptions::strict()).unwrap();
    let relax = build_cswmp(&s, &ClearingOptions::strict()).unwrap();
    assert_eq!(milp.relaxed(), relax);
    let lp = solve_lp(&relax, &SimplexParams::default()).unwrap().objective;
    let opt = solve_milp(&milp, &MilpConfig::default()).unwrap().objective.unwrap();
    assert!(lp >= opt - 1e-9);
}

#[test]
fn scaled_objective_decreases_with_markup() {
    let s = example(1);
    let mut last = f64::INFINITY;
    for alpha in [0.0, 0.01, 0.1, 0.5, 1.0, 2.0] {
        let inst = build_cswmp(&s, &ClearingOptions::weak(0.0).with_alpha(alpha)).unwrap();
        let v = solve_lp(&inst, &SimplexParams::default()).unwrap().objective;
        assert!(v <= last + 1e-9);
        last = v;
    }
}

#[test]
fn variable_index_round_trips() {
    let s = example(1);
    let inst = build_cswmp(&s, &ClearingOptions::weak(5.0)).unwrap();
    let col = inst.column(&u(0)).unwrap();
    assert_eq!(inst.index().name(col).unwrap(), u(0));
    assert!(inst.column(&VarName::Flow { line: 0, period: 0 }).is_none());
    let s3 = example(3);
    let inst3 = build_cswmp(&s3, &ClearingOptions::weak(0.0)).unwrap();
    assert!(inst3.column(&VarName::Flow { line: 2, period: 0 }).is_some());
}

#[test]
fn option_combinations_checked() {
    let s = example(1);
    let bad = ClearingOptions { auctioneer_demand: 5.0, ..ClearingOptions::strict() };
    assert!(matches!(build_cswmp(&s, &bad), Err(FormulationError::Options(_))));
    assert!(matches!(build_rc_delta(&s, &ClearingOptions::strict(), &[0.5, 1.0]), Err(FormulationError::NonBinary { .. })));
    assert!(matches!(build_rc_delta(&s, &ClearingOptions::strict(), &[1.0]), Err(FormulationError::CommitmentLength { .. })));
}

#[test]
fn rc_milp_branches_only_on_fractional() {
    let s = example(1);
    let inst = build_rc_milp(&s, &ClearingOptions::weak(0.0).with_alpha(1.0), &[None, Some(1.0)]).unwrap();
    assert_eq!(inst.binaries(), vec![inst.column(&u(0)).unwrap()]);
    let all = build_rc_milp(&s, &ClearingOptions::strict(), &[Some(0.0), Some(1.0)]).unwrap();
    assert_eq!(all, build_rc_delta(&s, &ClearingOptions::strict(), &[0.0, 1.0]).unwrap());
}

use super::*;
use crate::metrics::rwl;
use crate::scenario::tests::fixture;
use crate::scenario::{parse_scenario, Buyer, BuyerBid, Network, Seller, SellerBid};

fn example(n: u8) -> Scenario {
    parse_scenario(&fixture(&format!("example{n}.json"))).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-6
}

fn params() -> SimplexParams {
    SimplexParams::default()
}

fn phase1(s: &Scenario, alpha: f64, r: f64) -> Pseudoequilibrium {
    solve_phase1(s, &ClearingOptions::weak(r).with_alpha(alpha), &params()).unwrap()
}

fn convex() -> Scenario {
    let seller = |id: &str, q: f64, c: f64| Seller {
        id: id.into(),
        node: "n".into(),
        no_load: 0.0,
        min_uptime: 0,
        pmin: vec![0.0, 0.0],
        pmax: vec![q, q],
        bids: vec![vec![SellerBid { q, c }]; 2],
    };
    Scenario {
        horizon: 2,
        network: Network { reference: "n".into(), nodes: vec!["n".into()], lines: vec![] },
        sellers: vec![seller("a", 6.0, 3.0), seller("b", 6.0, 9.0)],
        buyers: vec![Buyer {
            id: "d".into(),
            node: "n".into(),
            inelastic: vec![4.0, 5.0],
            dmax: vec![10.0, 10.0],
            bids: vec![vec![BuyerBid { q: 6.0, v: 12.0 }]; 2],
        }],
    }
}

#[test]
fn example_one_phase1() {
    let pe = phase1(&example(1), 1.0, 5.0);
    assert!(close(pe.commitment[0], 0.5) && close(pe.commitment[1], 1.0));
    assert!(close(pe.prices.seller_price(0, 0), 5.0));
    assert_eq!(pe.integral, vec![None, Some(1.0)]);
}

#[test]
fn example_three_large_demand_infeasible() {
    let s = example(3);
    for alpha in [0.0, 0.01, 0.1] {
        let e = solve_phase1(&s, &ClearingOptions::weak(500.0).with_alpha(alpha), &params()).unwrap_err();
        assert!(matches!(e, MarkupError::Phase1Infeasible { auctioneer_demand, .. } if auctioneer_demand == 500.0));
        assert!(solve_phase1(&s, &ClearingOptions::weak(0.0).with_alpha(alpha), &params()).is_ok());
    }
}

#[test]
fn convex_phase1_is_integral() {
    let s = convex();
    for alpha in [0.0, 0.3] {
        let pe = solve_phase1(&s, &ClearingOptions::strict().with_alpha(alpha), &params()).unwrap();
        assert!(pe.is_integral());
        assert!(pe.commitment.iter().all(|&u| u == 1.0));
    }
}

#[test]
fn threshold_rule() {
    assert_eq!(round_threshold(&[0.5], 0.5).unwrap(), vec![1.0]);
    assert_eq!(round_threshold(&[0.7], 0.8).unwrap(), vec![0.0]);
    assert_eq!(round_threshold(&[1.0, 1.0], 1.0).unwrap(), vec![1.0, 1.0]);
    let once = round_threshold(&[0.2, 0.6, 0.9], 0.6).unwrap();
    assert_eq!(round_threshold(&once, 0.6).unwrap(), once);
    assert!(matches!(round_threshold(&[0.5], 0.0), Err(MarkupError::InvalidDelta(_))));
    assert!(matches!(round_threshold(&[0.5], 1.5), Err(MarkupError::InvalidDelta(_))));
}

#[test]
fn residual_examples() {
    let opts = ClearingOptions::weak(0.0).with_alpha(1.0);
    let s1 = example(1);
    let a = residual_clear(&s1, &opts, &[0.0, 1.0], &params()).unwrap();
    assert!(close(a.seller_total[1][0], 8.0) && close(a.buyer_blocks[0][0][0], 0.0));
    assert!(close(welfare(&a, &s1), -32.0));
    assert!(matches!(residual_clear(&s1, &opts, &[0.0, 0.0], &params()), Err(MarkupError::ResidualInfeasible)));

    let s2 = example(2);
    let pe = phase1(&s2, 1.0, 5.0);
    assert!(close(pe.commitment[0], 0.7));
    let a = residual_clear(&s2, &opts, &round_threshold(&pe.commitment, 0.8).unwrap(), &params()).unwrap();
    assert_eq!(a.seller_blocks[1][0].iter().map(|v| v.round()).collect::<Vec<_>>(), vec![8.0, 2.0]);
    assert!((allocation_distance(&a, &pe.allocation) - 7.28).abs() < 0.01);
}

#[test]
fn delta_search_examples() {
    let s = example(1);
    let pe = phase1(&s, 1.0, 5.0);
    let opts = ClearingOptions::weak(0.0).with_alpha(1.0);
    let c = search_delta(&s, &opts, &pe, &[0.8, 0.2, 0.5], &params()).unwrap();
    // δ ≤ 0.5 commits both sellers, which the oversupply cap rejects
    assert_eq!(c.delta, 0.8);
    assert!(close(c.welfare, -32.0));
    assert_eq!(c.trials.iter().filter(|t| t.feasible).count(), 1);

    let uncapped = ClearingOptions { oversupply_cap: None, ..opts };
    let c = search_delta(&s, &uncapped, &pe, &[0.2, 0.5, 0.8], &params()).unwrap();
    assert!(c.trials.iter().all(|t| t.feasible));
    assert!(close(c.welfare, -32.0));
    assert_eq!(c.delta, 0.8, "u=(1,1) costs more than (0,1) once oversupply is allowed");

    let mut tight = example(1);
    tight.buyers[0].inelastic[0] = 12.0;
    tight.buyers[0].dmax[0] = 12.0;
    let pe = phase1(&tight, 1.0, 0.0);
    assert!(pe.commitment.iter().any(|&u| u < 1.0));
    assert!(matches!(search_delta(&tight, &opts, &pe, &[1.0], &params()), Err(MarkupError::AllDeltasInfeasible(_))));
    assert!(matches!(search_delta(&tight, &opts, &pe, &[], &params()), Err(MarkupError::EmptyCandidates(_))));
}

#[test]
fn convex_delta_search_returns_phase1() {
    let s = convex();
    let opts = ClearingOptions::strict().with_alpha(0.2);
    let pe = solve_phase1(&s, &opts, &params()).unwrap();
    for d in [0.01, 0.5, 1.0] {
        let c = search_delta(&s, &opts, &pe, &[d], &params()).unwrap();
        assert!(close(c.welfare, welfare(&pe.allocation, &s)));
    }
}

#[test]
fn milp_rounding_examples() {
    let opts = ClearingOptions::weak(0.0).with_alpha(1.0);
    let cfg = MilpConfig::default();
    let s1 = example(1);
    let pe = phase1(&s1, 1.0, 5.0);
    let a = milp_round(&s1, &opts, &pe, &cfg).unwrap();
    assert!(close(a.commitment[0][0], 0.0) && close(welfare(&a, &s1), -32.0));

    let s2 = example(2);
    let pe = phase1(&s2, 1.0, 5.0);
    let a = milp_round(&s2, &opts, &pe, &cfg).unwrap();
    assert!(a.max_violation(&s2, &opts) <= 1e-6);

    let conv = convex();
    let strict = ClearingOptions::strict().with_alpha(0.1);
    let pe = solve_phase1(&conv, &strict, &params()).unwrap();
    let a = milp_round(&conv, &strict, &pe, &cfg).unwrap();
    let b = residual_clear(&conv, &strict, &pe.commitment, &params()).unwrap();
    assert!(close(welfare(&a, &conv), welfare(&b, &conv)));
}

#[test]
fn example_one_markup_at_alpha_one() {
    let s = example(1);
    let cfg = MarkupConfig { alphas: vec![1.0], ..MarkupConfig::weak(5.0) };
    let out = run_markup(&s, &cfg).unwrap();
    assert_eq!(out.alpha, 1.0);
    assert_eq!(out.delta, Some(0.7));
    assert!(close(out.welfare, -32.0));
    assert!((rwl(out.welfare, -30.0).unwrap() - 6.67).abs() < 0.01);
    assert!(out.mwps.iter().all(|&m| m == 0.0));
    assert!(close(out.budget.surplus_before_mwp, 40.0) && close(out.budget.oversupply, 0.0));
    assert!(close(out.buyer_price_factor(), 2.0));
}

#[test]
fn scan_returns_smallest_accepted_alpha() {
    let s = example(1);
    let cfg = MarkupConfig { alphas: vec![0.0, 0.01, 0.1, 0.2, 1.0, 1.5], ..MarkupConfig::weak(5.0) };
    let out = run_markup(&s, &cfg).unwrap();
    assert!(out.mwps.iter().all(|&m| m == 0.0));
    assert!(out.budget.surplus_before_mwp - out.budget.mwp_total >= -1e-6);
    let (last, earlier) = out.trials.split_last().unwrap();
    assert!(last.accepted && last.alpha == out.alpha);
    assert!(earlier.iter().all(|t| !t.accepted));
}

#[test]
fn convex_market_needs_no_markup() {
    let s = convex();
    let out = run_markup(&s, &MarkupConfig::default()).unwrap();
    assert_eq!(out.alpha, 0.0);
    assert!(out.mwps.iter().all(|&m| m == 0.0));
    assert!(out.budget.surplus_before_mwp.abs() < 1e-6);
    assert!(out.trials[0].identity_residual.unwrap() < 1e-6);
}

#[test]
fn every_alpha_failing_lists_diagnostics() {
    let s = example(2);
    let cfg = MarkupConfig { alphas: vec![0.0], ..MarkupConfig::weak(5.0) };
    match run_markup(&s, &cfg) {
        Err(MarkupError::NoAlpha(trials)) => {
            assert_eq!(trials.len(), 1);
            assert!(trials[0].budget_after_mwp.unwrap() < 0.0);
        }
        other => panic!("expected NoAlpha, got {other:?}"),
    }
    let bad = MarkupConfig { alphas: vec![0.1, 0.0], ..MarkupConfig::default() };
    assert!(matches!(run_markup(&s, &bad), Err(MarkupError::UnsortedAlphas)));
}

#[test]
fn infeasible_phase1_surfaces_settings() {
    let s = example(3);
    let cfg = MarkupConfig { alphas: vec![0.0, 0.01, 0.1], ..MarkupConfig::weak(500.0) };
    assert!(matches!(run_markup(&s, &cfg), Err(MarkupError::Phase1Infeasible { .. })));
}

#[test]
fn milp_rounding_rule_in_scan() {
    let s = example(1);
    let cfg = MarkupConfig { alphas: vec![1.0], rounding: Arc::new(MilpRounding), ..MarkupConfig::weak(5.0) };
    let out = run_markup(&s, &cfg).unwrap();
    assert_eq!(out.rounding, "milp");
    assert_eq!(out.delta, None);
    assert!(close(out.welfare, -32.0));
}

use super::*;

pub(crate) fn fixture(name: &str) -> Vec<u8> {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn example(n: u8) -> Scenario {
    parse_scenario(&fixture(&format!("example{n}.json"))).unwrap()
}

fn rules(v: &[Violation]) -> Vec<&'static str> {
    v.iter().map(|x| x.rule).collect()
}

#[test]
fn example_one_counts() {
    let s = example(1);
    assert_eq!((s.sellers.len(), s.buyers.len(), s.horizon), (2, 1, 1));
    let t = totals(&s);
    assert_eq!((t.demand, t.supply), (10.0, 25.0));
}

#[test]
fn example_three_is_valid_and_totals_1200() {
    let s = example(3);
    assert!(validate(&s).is_empty());
    assert_eq!(totals(&s).supply, 1200.0);
}

#[test]
fn empty_scenario_totals_are_zero() {
    let s = Scenario {
        horizon: 1,
        network: Network { reference: "a".into(), nodes: vec!["a".into()], lines: vec![] },
        sellers: vec![],
        buyers: vec![],
    };
    let t = totals(&s);
    assert_eq!((t.demand, t.supply), (0.0, 0.0));
}

#[test]
fn empty_node_set_is_schema_error() {
    let raw = br#"{"horizon":1,"network":{"reference":"a","nodes":[],"lines":[]},"sellers":[],"buyers":[]}"#;
    match parse_scenario(raw) {
        Err(ParseError::Schema { path, .. }) => assert_eq!(path, "network.nodes"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn wrong_type_reports_field_path() {
    let raw = String::from_utf8(fixture("example1.json")).unwrap().replace("\"no_load\": 0", "\"no_load\": \"x\"");
    match parse_scenario(raw.as_bytes()) {
        Err(ParseError::Schema { path, .. }) => assert_eq!(path, "sellers[0].no_load"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_document_is_syntax_error() {
    let raw = fixture("example1.json");
    let r = parse_scenario(&raw[..raw.len() / 2]);
    assert!(matches!(r, Err(ParseError::Syntax { .. })), "{r:?}");
}

#[test]
fn negative_bid_quantity_fails_validation() {
    let raw = String::from_utf8(fixture("example1.json")).unwrap().replace("\"q\": 5, \"c\": 7", "\"q\": -1, \"c\": 7");
    match parse_scenario(raw.as_bytes()) {
        Err(ParseError::Invalid(v)) => assert!(rules(&v).contains(&"nonnegative-quantity")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn inverted_flow_limits_is_one_violation() {
    let mut s = example(3);
    s.network.lines[0].fmin = 200.0;
    assert_eq!(rules(&validate(&s)), vec!["line-flow-range"]);
}

#[test]
fn uptime_beyond_horizon_is_one_violation() {
    let mut s = example(1);
    s.sellers[0].min_uptime = 2;
    assert_eq!(rules(&validate(&s)), vec!["min-uptime"]);
}

#[test]
fn disconnected_network_detected() {
    let mut s = example(3);
    s.network.lines.retain(|l| l.to != "V3".into() && l.from != "V3".into());
    assert_eq!(rules(&validate(&s)), vec!["network-connected"]);
}

#[test]
fn supply_shortfall_is_only_a_warning() {
    let mut s = example(1);
    s.buyers[0].inelastic[0] = 30.0;
    s.buyers[0].dmax[0] = 32.0;
    let v = validate(&s);
    assert_eq!(rules(&v), vec!["supply-adequacy"]);
    assert_eq!(v[0].severity, Severity::Warning);
}

#[test]
fn integer_ids_are_accepted() {
    let raw = String::from_utf8(fixture("example1.json")).unwrap().replace("\"s1\"", "7");
    let s = parse_scenario(raw.as_bytes()).unwrap();
    assert_eq!(s.sellers[0].id, Id("7".into()));
}

#[test]
fn round_trip_is_identity() {
    for n in 1..=3 {
        let s = example(n);
        let again = parse_scenario(serialize_scenario(&s).as_bytes()).unwrap();
        assert_eq!(s, again);
    }
}

fn profiles() -> RenewableProfiles {
    parse_profiles(&fixture("profiles.csv")[..], 8).unwrap()
}

fn renewable_seller() -> Scenario {
    let mut s = example(1);
    s.sellers[0].pmin[0] = 0.0;
    s.sellers[0].bids[0] = vec![SellerBid { q: 100.0, c: 3.0 }];
    s.sellers[0].pmax[0] = 100.0;
    s.sellers[1].no_load = 50.0;
    s.sellers[1].pmax[0] = 2000.0;
    s.sellers[1].bids[0][1].q = 1992.0;
    s
}

#[test]
fn renewable_quantities_follow_profile() {
    let p = profiles();
    assert_eq!(p.wind[7], 1.0);
    assert_eq!(p.solar[7], 1.0);
    let out = extend_to_multiperiod(&renewable_seller(), &p, 42, DEFAULT_UPTIME_THRESHOLD).unwrap();
    assert_eq!(out.horizon, 24);
    let s = &out.sellers[0];
    let factors = if (s.bids[8][0].q - 100.0 * p.wind[8]).abs() < 1e-12 { &p.wind } else { &p.solar };
    for t in 0..24 {
        assert!((s.bids[t][0].q - 100.0 * factors[t]).abs() < 1e-9);
        assert!((s.pmax[t] - 100.0 * factors[t]).abs() < 1e-9);
    }
    assert_eq!(s.bids[7][0].q, 100.0);
    assert_eq!(s.min_uptime, 0);
    assert!(validate(&out).is_empty());
}

#[test]
fn large_conventional_units_get_no_uptime() {
    let p = profiles();
    for seed in 0..50 {
        let out = extend_to_multiperiod(&renewable_seller(), &p, seed, DEFAULT_UPTIME_THRESHOLD).unwrap();
        assert_eq!(out.sellers[1].min_uptime, 0);
        assert_eq!(out.sellers[1].pmax, vec![2000.0; 24]);
    }
}

#[test]
fn small_conventional_units_draw_all_uptimes() {
    let p = profiles();
    let mut s = example(1);
    s.sellers[0].no_load = 10.0;
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..60 {
        let out = extend_to_multiperiod(&s, &p, seed, DEFAULT_UPTIME_THRESHOLD).unwrap();
        seen.insert(out.sellers[0].min_uptime);
    }
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![0, 4, 6]);
}

#[test]
fn extension_is_deterministic() {
    let p = profiles();
    let a = extend_to_multiperiod(&renewable_seller(), &p, 9, DEFAULT_UPTIME_THRESHOLD).unwrap();
    let b = extend_to_multiperiod(&renewable_seller(), &p, 9, DEFAULT_UPTIME_THRESHOLD).unwrap();
    assert_eq!(serialize_scenario(&a), serialize_scenario(&b));
}

#[test]
fn extension_requires_single_period() {
    let p = profiles();
    let once = extend_to_multiperiod(&example(1), &p, 1, DEFAULT_UPTIME_THRESHOLD).unwrap();
    assert_eq!(extend_to_multiperiod(&once, &p, 1, DEFAULT_UPTIME_THRESHOLD), Err(ExtendError::Horizon(24)));
}

#[test]
fn short_profile_file_rejected() {
    let raw = String::from_utf8(fixture("profiles.csv")).unwrap();
    let short: String = raw.lines().take(24).map(|l| format!("{l}\n")).collect();
    assert!(matches!(parse_profiles(short.as_bytes(), 8), Err(ProfileError::RowCount(23))));
}

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use super::{Id, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    /// The scenario is well formed but clearing it cannot succeed.
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub path: String,
    pub message: String,
    pub severity: Severity,
}

struct Collector(Vec<Violation>);

impl Collector {
    fn error(&mut self, rule: &'static str, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation { rule, path: path.into(), message: message.into(), severity: Severity::Error });
    }

    fn warn(&mut self, rule: &'static str, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation { rule, path: path.into(), message: message.into(), severity: Severity::Warning });
    }

    fn per_period(&mut self, path: &str, field: &str, len: usize, horizon: usize) -> bool {
        if len != horizon {
            self.error("horizon-length", format!("{path}.{field}"), format!("has {len} periods, horizon is {horizon}"));
            return false;
        }
        true
    }
}

/// Check every structural invariant. Rule ids are stable strings.
pub fn validate(s: &Scenario) -> Vec<Violation> {
    let mut out = Collector(Vec::new());
    let net = &s.network;
    let t = s.horizon;
    if t == 0 {
        out.error("horizon-positive", "horizon", "horizon must be at least one period");
    }

    let mut nodes = HashSet::new();
    for (i, n) in net.nodes.iter().enumerate() {
        if !nodes.insert(n) {
            out.error("unique-node", format!("network.nodes[{i}]"), format!("node {n} listed twice"));
        }
    }
    if !nodes.contains(&net.reference) {
        out.error("reference-node", "network.reference", format!("reference {} is not a node", net.reference));
    }
    for (i, l) in net.lines.iter().enumerate() {
        let path = format!("network.lines[{i}]");
        for (end, id) in [("from", &l.from), ("to", &l.to)] {
            if !nodes.contains(id) {
                out.error("line-endpoint", format!("{path}.{end}"), format!("unknown node {id}"));
            }
        }
        if l.from == l.to {
            out.error("line-self-loop", path.clone(), format!("line connects {} to itself", l.from));
        }
        if !(l.susceptance > 0.0) {
            out.error("line-susceptance", format!("{path}.susceptance"), "susceptance must be positive");
        }
        if !(l.fmin <= l.fmax) {
            out.error("line-flow-range", path.clone(), format!("fmin {} exceeds fmax {}", l.fmin, l.fmax));
        }
    }
    if !net.nodes.is_empty() && out.0.is_empty() && !is_connected(s) {
        out.error("network-connected", "network", "network is not connected");
    }

    let mut ids: HashSet<&Id> = HashSet::new();
    for (k, sel) in s.sellers.iter().enumerate() {
        let path = format!("sellers[{k}]");
        if !ids.insert(&sel.id) {
            out.error("unique-agent", format!("{path}.id"), format!("seller id {} repeated", sel.id));
        }
        if !nodes.contains(&sel.node) {
            out.error("agent-node", format!("{path}.node"), format!("unknown node {}", sel.node));
        }
        if !(sel.no_load >= 0.0) {
            out.error("nonnegative-cost", format!("{path}.no_load"), "no-load cost must be nonnegative");
        }
        if sel.min_uptime > t {
            out.error("min-uptime", format!("{path}.min_uptime"), format!("min uptime {} exceeds horizon {t}", sel.min_uptime));
        }
        let ok = out.per_period(&path, "pmin", sel.pmin.len(), t)
            & out.per_period(&path, "pmax", sel.pmax.len(), t)
            & out.per_period(&path, "bids", sel.bids.len(), t);
        for (p, bids) in sel.bids.iter().enumerate() {
            for (l, b) in bids.iter().enumerate() {
                if !(b.q >= 0.0) {
                    out.error("nonnegative-quantity", format!("{path}.bids[{p}][{l}].q"), "nonnegative quantity required");
                }
            }
        }
        if ok {
            for p in 0..t {
                let cap: f64 = sel.bids[p].iter().map(|b| b.q).sum();
                let (lo, hi) = (sel.pmin[p], sel.pmax[p]);
                if !(lo >= 0.0 && lo <= hi && hi <= cap + 1e-9 * (1.0 + cap.abs())) {
                    out.error(
                        "output-range",
                        format!("{path}.pmax[{p}]"),
                        format!("need 0 <= pmin ({lo}) <= pmax ({hi}) <= offered quantity ({cap})"),
                    );
                }
            }
        }
    }

    let mut ids: HashSet<&Id> = HashSet::new();
    for (k, buy) in s.buyers.iter().enumerate() {
        let path = format!("buyers[{k}]");
        if !ids.insert(&buy.id) {
            out.error("unique-agent", format!("{path}.id"), format!("buyer id {} repeated", buy.id));
        }
        if !nodes.contains(&buy.node) {
            out.error("agent-node", format!("{path}.node"), format!("unknown node {}", buy.node));
        }
        let ok = out.per_period(&path, "inelastic", buy.inelastic.len(), t)
            & out.per_period(&path, "dmax", buy.dmax.len(), t)
            & out.per_period(&path, "bids", buy.bids.len(), t);
        for (p, bids) in buy.bids.iter().enumerate() {
            for (l, b) in bids.iter().enumerate() {
                if !(b.q >= 0.0) {
                    out.error("nonnegative-quantity", format!("{path}.bids[{p}][{l}].q"), "nonnegative quantity required");
                }
            }
        }
        if ok {
            for p in 0..t {
                let elastic: f64 = buy.bids[p].iter().map(|b| b.q).sum();
                let (lo, hi) = (buy.inelastic[p], buy.dmax[p]);
                if !(lo >= 0.0 && lo <= hi && hi <= lo + elastic + 1e-9 * (1.0 + hi.abs())) {
                    out.error(
                        "demand-range",
                        format!("{path}.dmax[{p}]"),
                        format!("need 0 <= inelastic ({lo}) <= dmax ({hi}) <= inelastic + bid quantity ({})", lo + elastic),
                    );
                }
            }
        }
    }

    if out.0.is_empty() {
        let supply: f64 = s.sellers.iter().flat_map(|x| &x.pmax).sum();
        let need: f64 = s.buyers.iter().flat_map(|b| &b.inelastic).sum();
        if supply < need {
            out.warn("supply-adequacy", "sellers", format!("total capacity {supply} is below inelastic demand {need}"));
        }
    }
    out.0
}

pub(super) fn is_connected(s: &Scenario) -> bool {
    let nodes = &s.network.nodes;
    if nodes.is_empty() {
        return true;
    }
    let idx: HashMap<&Id, usize> = nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let mut adj = vec![Vec::new(); nodes.len()];
    for l in &s.network.lines {
        if let (Some(&a), Some(&b)) = (idx.get(&l.from), idx.get(&l.to)) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.iter().all(|&x| x)
}

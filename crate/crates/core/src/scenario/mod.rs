//! Market scenarios: network, sellers, buyers and their per-period bids.

mod extend;
mod validate;

pub use extend::{extend_to_multiperiod, parse_profiles, ExtendError, ProfileError, RenewableProfiles, DEFAULT_UPTIME_THRESHOLD};
pub use validate::{validate, Severity, Violation};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Node or agent identifier. Integers in the input are accepted and kept in
/// their decimal string form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Id(pub String);

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Id {
    fn from(s: &str) -> Self {
        Id(s.to_string())
    }
}

impl Serialize for Id {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Id {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct IdVisitor;
        impl serde::de::Visitor<'_> for IdVisitor {
            type Value = Id;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a string or integer id")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Id, E> {
                Ok(Id(v.to_string()))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Id, E> {
                Ok(Id(v.to_string()))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Id, E> {
                Ok(Id(v.to_string()))
            }
        }
        d.deserialize_any(IdVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: Id,
    pub to: Id,
    pub susceptance: f64,
    pub fmin: f64,
    pub fmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub reference: Id,
    pub nodes: Vec<Id>,
    #[serde(default)]
    pub lines: Vec<Line>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerBid {
    pub q: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerBid {
    pub q: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seller {
    pub id: Id,
    pub node: Id,
    pub no_load: f64,
    pub min_uptime: usize,
    pub pmin: Vec<f64>,
    pub pmax: Vec<f64>,
    pub bids: Vec<Vec<SellerBid>>,
}

impl Seller {
    /// Renewable sellers are exactly those without a no-load cost.
    pub fn is_renewable(&self) -> bool {
        self.no_load == 0.0
    }

    /// Nothing about this seller depends on its commitment status: zero
    /// no-load cost, no minimum output and no uptime requirement.
    pub fn is_commitment_free(&self) -> bool {
        self.no_load == 0.0 && self.min_uptime == 0 && self.pmin.iter().all(|&p| p == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Buyer {
    pub id: Id,
    pub node: Id,
    pub inelastic: Vec<f64>,
    pub dmax: Vec<f64>,
    pub bids: Vec<Vec<BuyerBid>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon: usize,
    pub network: Network,
    #[serde(default)]
    pub sellers: Vec<Seller>,
    #[serde(default)]
    pub buyers: Vec<Buyer>,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("scenario failed validation: {}", list_rules(.0))]
    Invalid(Vec<Violation>),
}

fn list_rules(v: &[Violation]) -> String {
    v.iter().map(|x| format!("{} at {}", x.rule, x.path)).collect::<Vec<_>>().join(", ")
}

/// Parse and validate a scenario document. Warnings do not fail the parse.
pub fn parse_scenario(raw: &[u8]) -> Result<Scenario, ParseError> {
    let de = &mut serde_json::Deserializer::from_slice(raw);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => Scenario::schema_error(path, &inner),
            _ => ParseError::Syntax { line: inner.line(), column: inner.column(), message: inner.to_string() },
        }
    })?;
    if scenario.network.nodes.is_empty() {
        return Err(ParseError::Schema { path: "network.nodes".into(), message: "at least one node is required".into() });
    }
    let errors: Vec<Violation> = validate(&scenario).into_iter().filter(|v| v.severity == Severity::Error).collect();
    if !errors.is_empty() {
        return Err(ParseError::Invalid(errors));
    }
    Ok(scenario)
}

/// Canonical pretty-printed JSON.
pub fn serialize_scenario(s: &Scenario) -> String {
    serde_json::to_string_pretty(s).expect("scenario serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Totals {
    /// Σ maximum demand over buyers and periods.
    pub demand: f64,
    /// Σ maximum output over sellers and periods.
    pub supply: f64,
    pub inelastic: f64,
    pub nodes: usize,
    pub lines: usize,
    pub sellers: usize,
    pub buyers: usize,
}

pub fn totals(s: &Scenario) -> Totals {
    Totals {
        demand: s.buyers.iter().flat_map(|b| &b.dmax).sum(),
        supply: s.sellers.iter().flat_map(|x| &x.pmax).sum(),
        inelastic: s.buyers.iter().flat_map(|b| &b.inelastic).sum(),
        nodes: s.network.nodes.len(),
        lines: s.network.lines.len(),
        sellers: s.sellers.len(),
        buyers: s.buyers.len(),
    }
}

impl Scenario {
    fn schema_error(path: String, e: &serde_json::Error) -> ParseError {
        // serde_json appends " at line L column C"; the path already locates it
        let msg = e.to_string();
        let message = msg.split(" at line ").next().unwrap_or(&msg).to_string();
        ParseError::Schema { path, message }
    }

    /// Node position lookup; only meaningful on validated scenarios.
    pub fn node_index(&self) -> HashMap<&Id, usize> {
        self.network.nodes.iter().enumerate().map(|(i, n)| (n, i)).collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.network.nodes.len()
    }

    pub fn seller_node(&self, s: usize) -> usize {
        self.node_position(&self.sellers[s].node)
    }

    pub fn buyer_node(&self, b: usize) -> usize {
        self.node_position(&self.buyers[b].node)
    }

    pub fn node_position(&self, id: &Id) -> usize {
        self.network.nodes.iter().position(|n| n == id).expect("validated node reference")
    }

    pub fn reference_position(&self) -> usize {
        self.node_position(&self.network.reference)
    }

    /// (from, to) positions of each line.
    pub fn line_endpoints(&self) -> Vec<(usize, usize)> {
        let idx = self.node_index();
        self.network.lines.iter().map(|l| (idx[&l.from], idx[&l.to])).collect()
    }

    /// Whether the undirected line graph has no cycles.
    pub fn is_radial(&self) -> bool {
        self.network.lines.len() + 1 == self.network.nodes.len() && validate::is_connected(self)
    }
}

#[cfg(test)]
pub(crate) mod tests;

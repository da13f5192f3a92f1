//! Concrete LP/MILP instances.
//!
//! A [`ProblemInstance`] is the common currency between the formulation
//! builders, the simplex engine and branch-and-bound. Every column carries a
//! structured [`VarName`] and every row a [`RowTag`], so clearing code can
//! address variables and duals by meaning instead of by position.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

/// Structured name of a column. Agent, node, line, period and block fields
/// are zero-based positions into the owning [`crate::scenario::Scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarName {
    /// `x_btl`: consumption from one elastic block.
    BuyerBlock { buyer: usize, period: usize, block: usize },
    /// `x_bt`: total consumption including the inelastic base.
    BuyerTotal { buyer: usize, period: usize },
    /// `y_stl`: production from one offer block.
    SellerBlock { seller: usize, period: usize, block: usize },
    /// `y_st`: total production.
    SellerTotal { seller: usize, period: usize },
    /// `u_st`: commitment.
    Commitment { seller: usize, period: usize },
    /// `φ_st`: startup indicator.
    Startup { seller: usize, period: usize },
    /// Voltage angle of a node.
    Angle { node: usize, period: usize },
    /// Flow on a line, positive in the line's `from -> to` direction.
    Flow { line: usize, period: usize },
    /// Excess supply at a node beyond the auctioneer demand (weak balance only).
    Excess { node: usize, period: usize },
    /// Anonymous column of a hand-built instance.
    Generic(usize),
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VarName::BuyerBlock { buyer, period, block } => {
                write!(f, "xb_b{buyer}_t{period}_l{block}")
            }
            VarName::BuyerTotal { buyer, period } => write!(f, "x_b{buyer}_t{period}"),
            VarName::SellerBlock { seller, period, block } => {
                write!(f, "yb_s{seller}_t{period}_l{block}")
            }
            VarName::SellerTotal { seller, period } => write!(f, "y_s{seller}_t{period}"),
            VarName::Commitment { seller, period } => write!(f, "u_s{seller}_t{period}"),
            VarName::Startup { seller, period } => write!(f, "phi_s{seller}_t{period}"),
            VarName::Angle { node, period } => write!(f, "theta_v{node}_t{period}"),
            VarName::Flow { line, period } => write!(f, "f_e{line}_t{period}"),
            VarName::Excess { node, period } => write!(f, "sigma_v{node}_t{period}"),
            VarName::Generic(i) => write!(f, "v{i}"),
        }
    }
}

/// Constraint family of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowTag {
    /// Supply-demand balance of one good; its dual is the seller price.
    NodeBalance { node: usize, period: usize },
    FlowDefinition { line: usize, period: usize },
    BuyerAggregate { buyer: usize, period: usize },
    SellerBlockCap { seller: usize, period: usize, block: usize },
    SellerAggregate { seller: usize, period: usize },
    SellerMaxOutput { seller: usize, period: usize },
    SellerMinOutput { seller: usize, period: usize },
    MinUptime { seller: usize, period: usize },
    StartupDefinition { seller: usize, period: usize },
    OversupplyCap,
    Generic(usize),
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RowTag::NodeBalance { node, period } => write!(f, "bal_v{node}_t{period}"),
            RowTag::FlowDefinition { line, period } => write!(f, "flow_e{line}_t{period}"),
            RowTag::BuyerAggregate { buyer, period } => write!(f, "bagg_b{buyer}_t{period}"),
            RowTag::SellerBlockCap { seller, period, block } => {
                write!(f, "scap_s{seller}_t{period}_l{block}")
            }
            RowTag::SellerAggregate { seller, period } => write!(f, "sagg_s{seller}_t{period}"),
            RowTag::SellerMaxOutput { seller, period } => write!(f, "pmax_s{seller}_t{period}"),
            RowTag::SellerMinOutput { seller, period } => write!(f, "pmin_s{seller}_t{period}"),
            RowTag::MinUptime { seller, period } => write!(f, "upt_s{seller}_t{period}"),
            RowTag::StartupDefinition { seller, period } => {
                write!(f, "start_s{seller}_t{period}")
            }
            RowTag::OversupplyCap => write!(f, "oversupply_cap"),
            RowTag::Generic(i) => write!(f, "c{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: VarName,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse row: `(column, coefficient)` with distinct columns.
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub tag: RowTag,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate variable name {0}")]
    DuplicateVariable(VarName),
    #[error("duplicate row tag {0}")]
    DuplicateRow(RowTag),
    #[error("row {row} references unknown column {col}")]
    UnknownColumn { row: RowTag, col: usize },
    #[error("variable {name} has empty domain [{lower}, {upper}]")]
    EmptyDomain { name: VarName, lower: f64, upper: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("unknown variable {0}")]
    UnknownVariable(VarName),
    #[error("column {0} out of range")]
    ColumnOutOfRange(usize),
}

/// Bidirectional map between structured names and column positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableIndex {
    by_name: HashMap<VarName, usize>,
    names: Vec<VarName>,
}

impl VariableIndex {
    pub fn column(&self, name: &VarName) -> Result<usize, ModelError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or(ModelError::UnknownVariable(*name))
    }

    pub fn get(&self, name: &VarName) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, col: usize) -> Result<VarName, ModelError> {
        self.names
            .get(col)
            .copied()
            .ok_or(ModelError::ColumnOutOfRange(col))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// An LP or MILP: bounded columns, sparse rows, linear objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub sense: Sense,
    variables: Vec<Variable>,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    index: VariableIndex,
    row_by_tag: HashMap<RowTag, usize>,
}

impl ProblemInstance {
    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Dense objective coefficients, one per column.
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.constraints.iter().map(|c| c.terms.len()).sum()
    }

    pub fn index(&self) -> &VariableIndex {
        &self.index
    }

    pub fn column(&self, name: &VarName) -> Option<usize> {
        self.index.get(name)
    }

    pub fn row(&self, tag: &RowTag) -> Option<usize> {
        self.row_by_tag.get(tag).copied()
    }

    /// Columns marked binary, in increasing order.
    pub fn binaries(&self) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn row_activity(&self, row: usize, x: &[f64]) -> f64 {
        self.constraints[row].terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Largest violation of any row or bound by `x` (integrality ignored).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (v, &val) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - val).max(val - v.upper);
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let act = self.row_activity(i, x);
            let viol = match c.relation {
                Relation::Eq => (act - c.rhs).abs(),
                Relation::Le => act - c.rhs,
                Relation::Ge => c.rhs - act,
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Largest distance of a binary column from {0, 1}.
    pub fn max_integrality_violation(&self, x: &[f64]) -> f64 {
        self.variables
            .iter()
            .zip(x)
            .filter(|(v, _)| v.kind == VarKind::Binary)
            .map(|(_, &val)| (val - val.round()).abs())
            .fold(0.0, f64::max)
    }

    /// Copy with new bounds on one column.
    pub fn with_bounds(&self, col: usize, lower: f64, upper: f64) -> ProblemInstance {
        let mut out = self.clone();
        out.variables[col].lower = lower;
        out.variables[col].upper = upper;
        out
    }

    pub fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) {
        self.variables[col].lower = lower;
        self.variables[col].upper = upper;
    }

    pub fn set_kind(&mut self, col: usize, kind: VarKind) {
        self.variables[col].kind = kind;
    }

    pub fn set_rhs(&mut self, row: usize, rhs: f64) {
        self.constraints[row].rhs = rhs;
    }

    /// Copy with every integrality mark dropped.
    pub fn relaxed(&self) -> ProblemInstance {
        let mut out = self.clone();
        for v in &mut out.variables {
            v.kind = VarKind::Continuous;
        }
        out
    }

    /// Render in CPLEX LP text format for cross-checking with external solvers.
    ///
    /// Grammar: an objective section (`Maximize`/`Minimize`, ` obj: <terms>`),
    /// `Subject To` with one ` <name>: <terms> <op> <rhs>` line per row,
    /// `Bounds` with `lo <= name <= hi`, `name free` or `name = v`,
    /// `Binaries` listing binary columns, and a closing `End`.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let name = |j: usize| self.variables[j].name.to_string();
        let terms = |items: &mut dyn Iterator<Item = (usize, f64)>| {
            let mut s = String::new();
            for (k, (j, a)) in items.filter(|&(_, a)| a != 0.0).enumerate() {
                if k == 0 {
                    if a < 0.0 {
                        s.push_str("- ");
                    }
                } else {
                    s.push_str(if a < 0.0 { " - " } else { " + " });
                }
                let _ = write!(s, "{} {}", fmt_num(a.abs()), name(j));
            }
            if s.is_empty() {
                // LP grammar needs at least one term
                let _ = write!(s, "0 {}", self.variables.first().map(|v| v.name.to_string()).unwrap_or_default());
            }
            s
        };
        out.push_str("\\ markup-core problem instance\n");
        out.push_str(match self.sense {
            Sense::Maximize => "Maximize\n",
            Sense::Minimize => "Minimize\n",
        });
        let mut obj = self.objective.iter().copied().enumerate();
        let _ = writeln!(out, " obj: {}", terms(&mut obj));
        out.push_str("Subject To\n");
        for c in &self.constraints {
            let op = match c.relation {
                Relation::Eq => "=",
                Relation::Le => "<=",
                Relation::Ge => ">=",
            };
            let mut it = c.terms.iter().copied();
            let _ = writeln!(out, " {}: {} {} {}", c.tag, terms(&mut it), op, fmt_num(c.rhs));
        }
        out.push_str("Bounds\n");
        for v in &self.variables {
            let n = v.name;
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {n} free");
                }
                (true, true) if v.lower == v.upper => {
                    let _ = writeln!(out, " {n} = {}", fmt_num(v.lower));
                }
                (true, true) => {
                    let _ = writeln!(out, " {} <= {n} <= {}", fmt_num(v.lower), fmt_num(v.upper));
                }
                (true, false) => {
                    let _ = writeln!(out, " {n} >= {}", fmt_num(v.lower));
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {n} <= {}", fmt_num(v.upper));
                }
            }
        }
        let bins = self.binaries();
        if !bins.is_empty() {
            out.push_str("Binaries\n");
            for j in bins {
                let _ = writeln!(out, " {}", name(j));
            }
        }
        out.push_str("End\n");
        out
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Incremental construction of a [`ProblemInstance`].
#[derive(Debug, Clone)]
pub struct ProblemBuilder {
    sense: Sense,
    variables: Vec<Variable>,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    index: VariableIndex,
    row_by_tag: HashMap<RowTag, usize>,
    error: Option<ModelError>,
}

impl ProblemBuilder {
    pub fn new(sense: Sense) -> Self {
        ProblemBuilder {
            sense,
            variables: Vec::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
            index: VariableIndex::default(),
            row_by_tag: HashMap::new(),
            error: None,
        }
    }

    pub fn add_var(&mut self, name: VarName, lower: f64, upper: f64, kind: VarKind, obj: f64) -> usize {
        let col = self.variables.len();
        if self.index.by_name.insert(name, col).is_some() && self.error.is_none() {
            self.error = Some(ModelError::DuplicateVariable(name));
        }
        if (lower > upper || lower.is_nan() || upper.is_nan()) && self.error.is_none() {
            self.error = Some(ModelError::EmptyDomain { name, lower, upper });
        }
        if !obj.is_finite() && self.error.is_none() {
            self.error = Some(ModelError::NonFinite(name.to_string()));
        }
        self.index.names.push(name);
        self.variables.push(Variable { name, lower, upper, kind });
        self.objective.push(obj);
        col
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64, tag: RowTag) -> usize {
        let row = self.constraints.len();
        if self.error.is_none() {
            if let Some(&(col, _)) = terms.iter().find(|(j, _)| *j >= self.variables.len()) {
                self.error = Some(ModelError::UnknownColumn { row: tag, col });
            } else if !rhs.is_finite() || terms.iter().any(|(_, a)| !a.is_finite()) {
                self.error = Some(ModelError::NonFinite(tag.to_string()));
            }
        }
        if self.row_by_tag.insert(tag, row).is_some() && self.error.is_none() {
            self.error = Some(ModelError::DuplicateRow(tag));
        }
        let mut terms = terms;
        terms.retain(|&(_, a)| a != 0.0);
        terms.sort_by_key(|&(j, _)| j);
        // merge repeated columns
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (j, a) in terms {
            match merged.last_mut() {
                Some((lj, la)) if *lj == j => *la += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint { terms: merged, relation, rhs, tag });
        row
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn build(self) -> Result<ProblemInstance, ModelError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        Ok(ProblemInstance {
            sense: self.sense,
            variables: self.variables,
            objective: self.objective,
            constraints: self.constraints,
            index: self.index,
            row_by_tag: self.row_by_tag,
        })
    }
}

//! Report rows, their on-disk forms and the merged comparison table.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::BalanceMode;
use crate::strategy::{ClearingRun, RunStatus};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}, line {line}: {source}")]
    Json { path: String, line: usize, source: serde_json::Error },
    #[error("{path}: schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersion { path: String, found: u32 },
    #[error("no report rows given")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// One clearing run. Money in currency units, energy in MWh, RWL in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingReport {
    pub schema_version: u32,
    pub scenario: String,
    pub algorithm: String,
    pub balance: BalanceMode,
    pub status: RunStatus,
    pub welfare: Option<f64>,
    pub supply: Option<f64>,
    pub demand: Option<f64>,
    pub oversupply: Option<f64>,
    pub mwps: Option<f64>,
    /// Negative values are surpluses.
    pub budget_deficit: Option<f64>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub rwl: Option<f64>,
    pub runtime_s: f64,
    /// Stage times; absent when the run produced no allocation.
    pub phase1_s: Option<f64>,
    pub phase2_s: Option<f64>,
    pub gap: Option<f64>,
    pub distance: Option<f64>,
    pub note: Option<String>,
}

impl ClearingReport {
    pub fn from_run(scenario: &str, run: &ClearingRun) -> Self {
        let a = run.allocation.as_ref();
        let ok = run.budget.is_some();
        ClearingReport {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.to_string(),
            algorithm: run.algorithm.to_string(),
            balance: run.balance,
            status: run.status,
            welfare: run.welfare,
            supply: a.map(|a| a.total_supply()),
            demand: a.map(|a| a.total_demand()),
            oversupply: run.budget.map(|b| b.oversupply),
            mwps: run.budget.map(|b| b.mwp_total),
            budget_deficit: run.budget.map(|b| b.deficit),
            alpha: ok.then_some(run.alpha),
            delta: run.delta,
            rwl: None,
            runtime_s: run.timings.total.as_secs_f64(),
            phase1_s: a.map(|_| run.timings.phase1.as_secs_f64()),
            phase2_s: a.map(|_| run.timings.phase2.as_secs_f64()),
            gap: run.gap,
            distance: run.distance,
            note: run.note.clone(),
        }
    }

    fn is_exact(&self) -> bool {
        matches!(self.algorithm.as_str(), "opt" | "ip-price")
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// Appends rows to `path`, writing a CSV header only into an empty file.
pub fn append_rows(path: &Path, rows: &[ClearingReport], format: Format) -> Result<(), ReportError> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io(path))?;
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
            for r in rows {
                w.serialize(r).map_err(|source| ReportError::Csv { path: path.display().to_string(), source })?;
            }
            w.flush().map_err(io(path))
        }
        Format::Json => {
            let mut w = std::io::BufWriter::new(file);
            for r in rows {
                let line = serde_json::to_string(r).expect("report serializes");
                writeln!(w, "{line}").map_err(io(path))?;
            }
            w.flush().map_err(io(path))
        }
    }
}

/// Reads a report file: CSV when the extension is `.csv`, otherwise one JSON
/// object per line.
pub fn read_rows(path: &Path) -> Result<Vec<ClearingReport>, ReportError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(io(path))?;
    let rows: Vec<ClearingReport> = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        csv::Reader::from_reader(file)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|source| ReportError::Csv { path: name.clone(), source })?
    } else {
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value =
                serde_json::from_str(&line).map_err(|source| ReportError::Json { path: name.clone(), line: i + 1, source })?;
            check_version(&name, v.get("schema_version").and_then(serde_json::Value::as_u64))?;
            rows.push(serde_json::from_value(v).map_err(|source| ReportError::Json { path: name.clone(), line: i + 1, source })?);
        }
        rows
    };
    for r in &rows {
        check_version(&name, Some(r.schema_version.into()))?;
    }
    Ok(rows)
}

/// All rows as one CSV document with a header.
pub fn render_csv(rows: &[ClearingReport]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|source| ReportError::Csv { path: "<memory>".into(), source })?;
    }
    let bytes = w.into_inner().expect("in-memory writer flushes");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn check_version(path: &str, v: Option<u64>) -> Result<(), ReportError> {
    match v {
        Some(v) if v == u64::from(SCHEMA_VERSION) => Ok(()),
        other => Err(ReportError::SchemaVersion { path: path.to_string(), found: other.unwrap_or(0) as u32 }),
    }
}

/// Fills RWL on every non-exact row that has an exact feasible counterpart
/// on the same scenario.
pub fn fill_rwl(rows: &mut [ClearingReport]) {
    let optima: Vec<(String, f64)> = rows
        .iter()
        .filter(|r| r.is_exact() && r.status == RunStatus::Ok)
        .filter_map(|r| r.welfare.map(|w| (r.scenario.clone(), w)))
        .collect();
    for r in rows.iter_mut() {
        if r.rwl.is_some() || r.is_exact() {
            continue;
        }
        let opt = optima.iter().find(|(s, _)| *s == r.scenario).map(|(_, w)| *w);
        if let (Some(w), Some(w_opt)) = (r.welfare, opt) {
            r.rwl = crate::metrics::rwl(w, w_opt).ok();
        }
    }
}

fn two(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn opt2(v: Option<f64>) -> String {
    v.map_or_else(String::new, two)
}

const HEADERS: [&str; 12] =
    ["Algorithm", "S=D", "Welfare", "Supply", "Demand", "Oversupply", "MWPs", "Budget Deficit", "α", "δ", "RWL", "Time(s)"];

fn cells(r: &ClearingReport) -> [String; 12] {
    let sd = match r.balance {
        BalanceMode::Strict => "yes",
        BalanceMode::Weak => "no",
    };
    let welfare = match r.status {
        RunStatus::Infeasible => "infeasible".to_string(),
        RunStatus::LimitReached if r.welfare.is_none() => "limit".to_string(),
        _ => opt2(r.welfare),
    };
    let budget = match r.budget_deficit {
        Some(d) if d < 0.0 && two(-d) != "0.00" => format!("({})", two(-d)),
        other => opt2(other),
    };
    [
        r.algorithm.clone(),
        sd.into(),
        welfare,
        opt2(r.supply),
        opt2(r.demand),
        opt2(r.oversupply),
        opt2(r.mwps),
        budget,
        opt2(r.alpha),
        opt2(r.delta),
        r.rwl.map_or_else(|| "n/a".into(), |v| format!("{}%", two(v))),
        two(r.runtime_s),
    ]
}

/// Plain-text comparison table with one section per scenario, in order of
/// first appearance. Budget surpluses are shown in parentheses.
pub fn render_table(rows: &[ClearingReport]) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut scenarios: Vec<&str> = Vec::new();
    for r in rows {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
    }
    let all: Vec<[String; 12]> = rows.iter().map(cells).collect();
    let mut width: Vec<usize> = HEADERS.iter().map(|h| h.chars().count()).collect();
    for c in &all {
        for (w, cell) in width.iter_mut().zip(c) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cols: &[String]| -> String {
        let mut s = String::new();
        for (i, (c, w)) in cols.iter().zip(&width).enumerate() {
            let pad = w - c.chars().count();
            if i == 0 {
                let _ = write!(s, "{c}{}", " ".repeat(pad));
            } else {
                let _ = write!(s, " | {}{c}", " ".repeat(pad));
            }
        }
        s.trim_end().to_string()
    };
    let header: Vec<String> = HEADERS.iter().map(|h| h.to_string()).collect();
    let mut out = String::new();
    for (k, sc) in scenarios.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "## {sc}");
        let _ = writeln!(out, "{}", line(&header));
        let _ = writeln!(out, "{}", width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
        for (r, c) in rows.iter().zip(&all) {
            if r.scenario == *sc {
                let _ = writeln!(out, "{}", line(c));
            }
        }
    }
    Ok(out)
}

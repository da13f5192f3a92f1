//! `markup`: clear scenarios, extend them to 24 hours and merge reports.
//!
//! Every flag can also be set through an environment variable named
//! `MARKUP_` followed by the flag name in upper case with dashes turned into
//! underscores, e.g. `MARKUP_ALPHA_SET=0,0.1`.
//!
//! Exit codes: 0 success, 1 the requested clearing is infeasible (the report
//! row is still written), 2 usage, input or output errors, 3 a solver limit
//! stopped the run before a usable result.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use markup_core::formulation::{BalanceMode, DEFAULT_OVERSUPPLY_CAP};
use markup_core::milp::MilpConfig;
use markup_core::report::{append_rows, fill_rwl, read_rows, render_csv, render_table, ClearingReport, Format};
use markup_core::scenario::{
    extend_to_multiperiod, parse_profiles, parse_scenario, serialize_scenario, DEFAULT_UPTIME_THRESHOLD,
};
use markup_core::strategy::{ClearContext, Registry, RunStatus};
use markup_core::synth::large_scenario;

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_LIMIT: u8 = 3;

#[derive(Parser)]
#[command(name = "markup", version, about = "Day-ahead market clearing with IP pricing or the two-price markup mechanism")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear one scenario and append a report row.
    Clear(ClearArgs),
    /// Expand a single-period scenario to 24 hours.
    Extend(ExtendArgs),
    /// Merge report files into one comparison table.
    Report(ReportArgs),
    /// Write a seeded synthetic scenario.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Balance {
    Strict,
    Weak,
}

#[derive(Clone, Copy, ValueEnum)]
enum RowFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct ClearArgs {
    #[arg(long, env = "MARKUP_SCENARIO")]
    scenario: PathBuf,
    /// One of opt, ip-price, markup-threshold, markup-milp.
    #[arg(long, env = "MARKUP_MODE")]
    mode: String,
    #[arg(long, value_enum, default_value = "strict", env = "MARKUP_BALANCE")]
    balance: Balance,
    /// Ascending markup candidates.
    #[arg(long, value_delimiter = ',', env = "MARKUP_ALPHA_SET")]
    alpha_set: Option<Vec<f64>>,
    /// Rounding thresholds; markup-threshold only.
    #[arg(long, value_delimiter = ',', env = "MARKUP_DELTA_SET")]
    delta_set: Option<Vec<f64>>,
    /// Energy left unsold at every node and period; weak balance only.
    #[arg(long, default_value_t = 0.0, env = "MARKUP_AUCTIONEER_DEMAND")]
    auctioneer_demand: f64,
    /// Excess supply allowed as a fraction of consumption, or `none`.
    #[arg(long, env = "MARKUP_OVERSUPPLY_CAP")]
    oversupply_cap: Option<String>,
    /// Recorded with the run; clearing itself is deterministic.
    #[arg(long, default_value_t = 0, env = "MARKUP_SEED")]
    seed: u64,
    /// Seconds per branch-and-bound solve.
    #[arg(long, env = "MARKUP_TIME_LIMIT")]
    time_limit: Option<f64>,
    /// Relative optimality gap for branch-and-bound.
    #[arg(long, default_value_t = 1e-6, env = "MARKUP_GAP")]
    gap: f64,
    /// Report file; rows are appended.
    #[arg(long, env = "MARKUP_OUT")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json", env = "MARKUP_FORMAT")]
    format: RowFormat,
    /// Worker threads; defaults to the available cores.
    #[arg(long, env = "MARKUP_JOBS")]
    jobs: Option<usize>,
    /// Scenario label in the report; defaults to the file stem.
    #[arg(long, env = "MARKUP_NAME")]
    name: Option<String>,
}

#[derive(Args)]
struct ExtendArgs {
    #[arg(long, env = "MARKUP_SCENARIO")]
    scenario: PathBuf,
    /// CSV with columns hour,wind,solar for hours 1 to 24.
    #[arg(long, env = "MARKUP_PROFILES")]
    profiles: PathBuf,
    #[arg(long, default_value_t = 0, env = "MARKUP_SEED")]
    seed: u64,
    /// Hour whose factors reproduce the single-period capacities.
    #[arg(long, default_value_t = 8, env = "MARKUP_BASE_HOUR")]
    base_hour: usize,
    /// Conventional units below this capacity get a random minimum uptime.
    #[arg(long, default_value_t = DEFAULT_UPTIME_THRESHOLD, env = "MARKUP_UPTIME_THRESHOLD")]
    uptime_threshold: f64,
    #[arg(long, env = "MARKUP_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files written by `clear` (`.csv`, otherwise JSON lines).
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text", env = "MARKUP_FORMAT")]
    format: TableFormat,
    #[arg(long, env = "MARKUP_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 50)]
    nodes: usize,
    #[arg(long, default_value_t = 24)]
    periods: usize,
    #[arg(long, default_value_t = 100)]
    sellers: usize,
    #[arg(long, default_value_t = 0, env = "MARKUP_SEED")]
    seed: u64,
    #[arg(long, env = "MARKUP_OUT")]
    out: PathBuf,
}

/// Error carrying its exit code.
struct Failure(u8, anyhow::Error);

fn usage(e: anyhow::Error) -> Failure {
    Failure(EXIT_USAGE, e)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .json()
        .with_current_span(false)
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("MARKUP_LOG").unwrap_or_else(|_| "info".into()),
        )
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Clear(a) => clear(a),
        Command::Extend(a) => extend(a).map_err(usage),
        Command::Report(a) => report(a).map_err(usage),
        Command::Generate(a) => generate(a).map_err(usage),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            tracing::error!(error = format!("{e:#}"), "run failed");
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn context(a: &ClearArgs) -> anyhow::Result<ClearContext> {
    let balance = match a.balance {
        Balance::Strict => BalanceMode::Strict,
        Balance::Weak => BalanceMode::Weak,
    };
    let oversupply_cap = match (a.oversupply_cap.as_deref(), balance) {
        (Some("none"), _) => None,
        (Some(v), _) => Some(v.parse::<f64>().with_context(|| format!("--oversupply-cap: `{v}` is not a number"))?),
        (None, BalanceMode::Weak) => Some(DEFAULT_OVERSUPPLY_CAP),
        (None, BalanceMode::Strict) => None,
    };
    if a.auctioneer_demand != 0.0 && balance == BalanceMode::Strict {
        bail!("--auctioneer-demand requires --balance weak");
    }
    if a.delta_set.is_some() && a.mode != "markup-threshold" {
        bail!("--delta-set applies only to --mode markup-threshold");
    }
    let mut milp = MilpConfig { gap_tol: a.gap, ..MilpConfig::default() };
    if let Some(t) = a.time_limit {
        if !(t > 0.0 && t.is_finite()) {
            bail!("--time-limit must be a positive number of seconds");
        }
        milp.time_limit = Some(Duration::from_secs_f64(t));
    }
    let mut ctx = ClearContext {
        balance,
        auctioneer_demand: a.auctioneer_demand,
        oversupply_cap,
        deltas: a.delta_set.clone(),
        milp,
        ..ClearContext::default()
    };
    if let Some(al) = &a.alpha_set {
        ctx.alphas = al.clone();
    }
    Ok(ctx)
}

fn clear(a: ClearArgs) -> Result<u8, Failure> {
    let registry = Registry::default();
    let strategy = registry.get(&a.mode).map_err(|e| usage(e.into()))?;
    let ctx = context(&a).map_err(usage)?;
    strategy.validate(&ctx).map_err(|e| usage(e.into()))?;
    let raw = read(&a.scenario).map_err(usage)?;
    let s = parse_scenario(&raw).with_context(|| format!("{}", a.scenario.display())).map_err(usage)?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.scenario.file_stem().map_or_else(|| "scenario".into(), |n| n.to_string_lossy().into_owned())
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.unwrap_or(0))
        .build()
        .map_err(|e| usage(e.into()))?;
    tracing::info!(scenario = %name, mode = %a.mode, balance = %ctx.balance, seed = a.seed, "clearing");
    let run = pool
        .install(|| strategy.clear(&s, &ctx))
        .map_err(|e| Failure(EXIT_USAGE, anyhow::Error::new(e).context("clearing failed")))?;
    let row = ClearingReport::from_run(&name, &run);
    tracing::info!(
        scenario = %name,
        algorithm = run.algorithm,
        status = ?run.status,
        welfare = run.welfare,
        alpha = run.alpha,
        delta = run.delta,
        distance = run.distance,
        mwps = row.mwps,
        budget_deficit = row.budget_deficit,
        phase1_s = row.phase1_s,
        phase2_s = row.phase2_s,
        runtime_s = row.runtime_s,
        "run finished"
    );
    let format = match a.format {
        RowFormat::Csv => Format::Csv,
        RowFormat::Json => Format::Json,
    };
    match &a.out {
        Some(p) => append_rows(p, std::slice::from_ref(&row), format).map_err(|e| usage(e.into()))?,
        None => println!("{}", serde_json::to_string(&row).expect("report serializes")),
    }
    Ok(match run.status {
        RunStatus::Ok => 0,
        RunStatus::Infeasible => EXIT_INFEASIBLE,
        RunStatus::LimitReached if run.welfare.is_some() => 0,
        RunStatus::LimitReached => EXIT_LIMIT,
    })
}

fn extend(a: ExtendArgs) -> anyhow::Result<u8> {
    let s = parse_scenario(&read(&a.scenario)?).with_context(|| format!("{}", a.scenario.display()))?;
    let profiles = parse_profiles(read(&a.profiles)?.as_slice(), a.base_hour)
        .with_context(|| format!("{}", a.profiles.display()))?;
    let out = extend_to_multiperiod(&s, &profiles, a.seed, a.uptime_threshold)?;
    write_atomic(&a.out, serialize_scenario(&out).as_bytes())?;
    tracing::info!(input = %a.scenario.display(), output = %a.out.display(), seed = a.seed, "scenario extended");
    Ok(0)
}

fn report(a: ReportArgs) -> anyhow::Result<u8> {
    let mut rows = Vec::new();
    for f in &a.files {
        rows.extend(read_rows(f)?);
    }
    fill_rwl(&mut rows);
    let text = match a.format {
        TableFormat::Text => render_table(&rows)?,
        TableFormat::Json => rows.iter().map(|r| serde_json::to_string(r).expect("report serializes") + "\n").collect(),
        TableFormat::Csv => render_csv(&rows)?,
    };
    match &a.out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn generate(a: GenerateArgs) -> anyhow::Result<u8> {
    if a.nodes == 0 || a.periods == 0 {
        bail!("--nodes and --periods must be positive");
    }
    let s = large_scenario(a.nodes, a.periods, a.sellers, a.seed);
    write_atomic(&a.out, serialize_scenario(&s).as_bytes())?;
    Ok(0)
}

/// Writes through a temporary sibling so a failed run leaves no partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

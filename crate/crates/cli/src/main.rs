//! `eventmarket`: parse cases, build scenarios, clear the event market and
//! run the three-phase study.
//!
//! Exit codes: 0 success, 2 bad input or configuration, 3 solver stopped at
//! a limit (outputs still written when a point exists), 4 internal failure.
//! Summaries go to stdout, diagnostics to stderr. `EVENTMARKET_LOG` sets the
//! log level.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use eventmarket_core::market::MarketOutcome;
use eventmarket_core::network::{parse_matpower_case, validate_case, Severity};
use eventmarket_core::scenario::{demand_csv, ScenarioSet};
use eventmarket_core::simulation::{
    build_scenarios, clear_market, costs_csv, emit_report, run_baseline, run_three_phase, write_files, RunOptions,
};
use eventmarket_core::CoreError;
use eventmarket_milp::{Limits, SolveStatus};

use config::{RunArgs, RunConfig};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_LIMIT: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match e.root() {
            CoreError::LimitReached(_) => EXIT_LIMIT,
            CoreError::Numerical(_) | CoreError::Contract(_) | CoreError::Solver(_) | CoreError::Csv(_) => EXIT_INTERNAL,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "eventmarket", version, about = "Event-market clearing for mobile grid resources")]
struct Cli {
    /// Worker threads [default: machine cores]; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a MATPOWER case and print a summary with diagnostics.
    Parse { case: PathBuf },
    /// Sample outage scenarios and reduce them to representatives.
    Scenarios {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Clear the market against a saved scenarios.json.
    Clear {
        /// scenarios.json written by `scenarios` or `simulate`.
        #[arg(long)]
        scenarios: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run all three phases and write the full report.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
}

fn limits(cfg: &RunConfig) -> Limits {
    Limits {
        max_nodes: cfg.max_nodes,
        time_limit: cfg.time_limit_s.map(Duration::from_secs_f64),
        ..Limits::default()
    }
}

fn options(cfg: &RunConfig) -> RunOptions {
    RunOptions {
        limits: limits(cfg),
        export_lp: cfg.lp_export.unwrap_or(false),
    }
}

fn cmd_parse(path: &PathBuf) -> Result<u8, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let case = parse_matpower_case(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let diags = validate_case(&case);
    for d in &diags {
        eprintln!("{d}");
    }
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    let verdict = if errors == 0 { "OK".to_string() } else { format!("{errors} error(s)") };
    println!(
        "{} buses, {} generators, {} branches, {} area(s), load {:.1} MW, base {} MVA: {verdict}",
        case.buses.len(),
        case.generators.len(),
        case.branches.len(),
        case.areas().len(),
        case.total_load(),
        case.base_mva
    );
    Ok(if errors == 0 { 0 } else { EXIT_CONFIG })
}

fn print_representatives(set: &ScenarioSet) {
    println!("{} sampled, {} representatives", set.sampled.len(), set.representatives.len());
    println!("{:>6} {:>10} {:>8} {:>12}  failed branches", "id", "weight", "members", "peak MW");
    for s in &set.representatives {
        let peak = s.event_hours().map(|t| s.hour_demand(t)).fold(0.0, f64::max);
        let failed: Vec<String> = s.failed_branches.iter().map(|b| b.to_string()).collect();
        println!("{:>6} {:>10.6} {:>8} {:>12.3}  {}", s.scenario_id, s.weight, s.cluster_size, peak, failed.join(" "));
    }
}

fn print_costs(outcome: &MarketOutcome) {
    for row in &outcome.table {
        println!("{:<32} {:>14.3}", row.quantity, row.value);
    }
}

fn cmd_scenarios(run: &RunArgs) -> Result<u8, Failure> {
    let cfg = run.resolve()?;
    let study = cfg.study()?;
    let (baseline, _) = run_baseline(&study.case, &study.plan, &study.params)?;
    let set = build_scenarios(&study.case, &study.hazard, &study.plan, &study.params, &baseline)?;
    let files = BTreeMap::from([
        ("scenarios.json".to_string(), set.to_json()?),
        ("demand.csv".to_string(), demand_csv(&set.representatives)?),
    ]);
    let out = cfg.out_dir();
    write_files(&files, &out)?;
    print_representatives(&set);
    println!("wrote {}", out.display());
    Ok(0)
}

fn cmd_clear(scenarios: &PathBuf, run: &RunArgs) -> Result<u8, Failure> {
    let mut cfg = run.resolve()?;
    let text = fs::read_to_string(scenarios).map_err(|e| Failure::config(format!("{}: {e}", scenarios.display())))?;
    let set = ScenarioSet::from_json(&text).map_err(|e| Failure::config(format!("{}: {e}", scenarios.display())))?;
    cfg.horizon_hours.get_or_insert(set.horizon_hours);
    let study = cfg.study()?;
    let (build, outcome, lp) = clear_market(&study.case, &set.representatives, &study.offers, &study.params, &options(&cfg))?;
    let mut files = BTreeMap::from([
        ("costs.csv".to_string(), costs_csv(&outcome)?),
        ("outcome.json".to_string(), serde_json::to_string_pretty(&outcome).map_err(CoreError::from)?),
        ("build.json".to_string(), serde_json::to_string_pretty(&build).map_err(CoreError::from)?),
    ]);
    if let Some(lp) = lp {
        files.insert("market.lp".to_string(), lp);
    }
    let out = cfg.out_dir();
    write_files(&files, &out)?;
    println!(
        "status {}, J = {:.3}, bound {:.3}, {} binaries, {} rows",
        outcome.status.as_str(),
        outcome.objective,
        outcome.best_bound,
        build.binaries,
        build.constraints
    );
    print_costs(&outcome);
    println!("wrote {}", out.display());
    Ok(if outcome.status == SolveStatus::Optimal { 0 } else { EXIT_LIMIT })
}

fn cmd_simulate(run: &RunArgs) -> Result<u8, Failure> {
    let cfg = run.resolve()?;
    let study = cfg.study()?;
    log::info!("config hash {}", study.config_hash()?);
    let report = run_three_phase(&study, &options(&cfg))?;
    let out = cfg.out_dir();
    emit_report(&study.case, &report, &out, cfg.plots.unwrap_or(false))?;
    let (a, b) = study.plan.event_window;
    println!(
        "event hours {a}-{b}, {} representatives, status {}, J = {:.3}, {} nodes, {:.2} s",
        report.scenarios.representatives.len(),
        report.solver_status().as_str(),
        report.outcome.objective,
        report.outcome.nodes,
        report.wall_time_s
    );
    print_costs(&report.outcome);
    let violations = report.voltage_violations().count();
    let diverged = report.non_converged();
    if violations > 0 || !diverged.is_empty() {
        eprintln!("phase 3: {violations} voltage violation(s), {} non-converged hour(s)", diverged.len());
    }
    println!("wrote {}", out.display());
    Ok(if report.solver_status() == SolveStatus::Optimal { 0 } else { EXIT_LIMIT })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EVENTMARKET_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    let result = match &cli.command {
        Command::Parse { case } => cmd_parse(case),
        Command::Scenarios { run } => cmd_scenarios(run),
        Command::Clear { scenarios, run } => cmd_clear(scenarios, run),
        Command::Simulate { run } => cmd_simulate(run),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

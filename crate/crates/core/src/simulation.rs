//! The three-phase study: pre-event baseline, event clearing, and replay of
//! the cleared fleet on the damaged network.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eventmarket_milp::{lp_format::write_lp, solve_milp, Limits, SolveStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acpf::{ac_power_flow, check_voltage_limits, AcOperatingPoint, AcPfResult, VoltageViolation};
use crate::dcopf::{dc_opf, Availability, DcOpfOptions, DcOpfResult};
use crate::error::{CoreError, Result};
use crate::market::{build_clearing_problem, extract_incumbent, BuildReport, MarketOutcome, MarketParams};
use crate::network::NetworkCase;
use crate::offers::{build_offer_book, validate_offer_book, OfferConfig};
use crate::scenario::{compute_all, reduce_scenarios, sample_scenarios, HazardConfig, OutageScenario, ScenarioSet};

pub const DEFAULT_SCENARIO_COUNT: usize = 1000;
pub const DEFAULT_CLUSTERS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub horizon_hours: usize,
    /// First and last event hour, inclusive.
    pub event_window: (usize, usize),
    pub scenario_count: usize,
    pub clusters: usize,
    /// Per-hour multiplier on every bus load; empty means constant loads.
    #[serde(default)]
    pub load_profile: Vec<f64>,
}

impl PhasePlan {
    pub fn new(horizon_hours: usize, event_window: (usize, usize)) -> Self {
        PhasePlan {
            horizon_hours,
            event_window,
            scenario_count: DEFAULT_SCENARIO_COUNT,
            clusters: DEFAULT_CLUSTERS,
            load_profile: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.event_window;
        if !(1 <= a && a <= b && b <= self.horizon_hours) {
            return Err(CoreError::Argument(format!(
                "event window [{a}, {b}] must lie within hours 1..={}",
                self.horizon_hours
            )));
        }
        if !self.load_profile.is_empty() && self.load_profile.len() != self.horizon_hours {
            return Err(CoreError::Argument("load_profile needs one factor per hour".into()));
        }
        if self.load_profile.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(CoreError::Argument("load_profile factors must be finite and >= 0".into()));
        }
        if self.clusters == 0 || self.scenario_count == 0 {
            return Err(CoreError::Argument("scenario count and clusters must be positive".into()));
        }
        Ok(())
    }

    pub fn pre_event_hours(&self) -> std::ops::Range<usize> {
        1..self.event_window.0
    }

    pub fn event_hours(&self) -> std::ops::RangeInclusive<usize> {
        self.event_window.0..=self.event_window.1
    }

    pub fn post_event_hours(&self) -> std::ops::RangeInclusive<usize> {
        self.event_window.1 + 1..=self.horizon_hours
    }

    fn factor(&self, t: usize) -> f64 {
        self.load_profile.get(t - 1).copied().unwrap_or(1.0)
    }
}

/// Everything a run needs besides the solver limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyInputs {
    /// Case with the fleet attached.
    pub case: NetworkCase,
    pub hazard: HazardConfig,
    pub offers: OfferConfig,
    pub params: MarketParams,
    pub plan: PhasePlan,
}

impl StudyInputs {
    /// SHA-256 over the canonical JSON of all inputs.
    pub fn config_hash(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// One event hour of one representative scenario, before (Phase 2) and
/// after (Phase 3) the cleared fleet is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourReplay {
    pub hour: usize,
    /// Damaged network without the fleet, shed-adjusted dispatch flowed.
    pub pre_ac: AcPfResult,
    /// MW injected per fleet resource as cleared.
    pub fleet_capacity: Vec<f64>,
    pub dc: DcOpfResult,
    pub ac: AcPfResult,
    pub violations: Vec<VoltageViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReplay {
    pub scenario_id: usize,
    pub weight: f64,
    /// MWh served over the event window with failures and no fleet.
    pub served_before_mwh: f64,
    /// The same with the cleared fleet injecting.
    pub served_after_mwh: f64,
    pub hours: Vec<HourReplay>,
}

impl ScenarioReplay {
    pub fn all_converged(&self) -> bool {
        self.hours.iter().all(|h| h.ac.converged)
    }
}

/// One trace sample; `scenario` is an id or `expected` for the weighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub scenario: String,
    pub hour: usize,
    pub resource: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Traces {
    /// p.u.
    pub soc: Vec<TracePoint>,
    /// MW
    pub dispatch: Vec<TracePoint>,
    /// DG MW, ESR MWh
    pub reserve: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub plan: PhasePlan,
    pub seed: u64,
    pub config_hash: String,
    pub baseline: Vec<DcOpfResult>,
    pub baseline_voltages: Vec<AcPfResult>,
    pub scenarios: ScenarioSet,
    pub build: BuildReport,
    pub outcome: MarketOutcome,
    pub replay: Vec<ScenarioReplay>,
    pub traces: Traces,
    /// Clearing problem in LP format, when requested.
    #[serde(skip)]
    pub lp_text: Option<String>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl SimulationReport {
    pub fn solver_status(&self) -> SolveStatus {
        self.outcome.status
    }

    pub fn voltage_violations(&self) -> impl Iterator<Item = (usize, usize, &VoltageViolation)> {
        self.replay
            .iter()
            .flat_map(|r| r.hours.iter().flat_map(move |h| h.violations.iter().map(move |v| (r.scenario_id, h.hour, v))))
    }

    /// (scenario, hour) pairs whose AC power flow did not converge.
    pub fn non_converged(&self) -> Vec<(usize, usize)> {
        self.replay
            .iter()
            .flat_map(|r| r.hours.iter().filter(|h| !h.ac.converged).map(move |h| (r.scenario_id, h.hour)))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub limits: Limits,
    pub export_lp: bool,
}

fn dc_options(params: &MarketParams) -> DcOpfOptions {
    DcOpfOptions {
        voll: params.voll,
        loss_fraction: params.loss_fraction,
    }
}

/// Voltage setpoint held by a deployed fleet resource.
pub const FLEET_VOLTAGE_SETPOINT: f64 = 1.0;

/// Served loads of a DC solve as an AC operating point. Fleet resources
/// flagged in `deployed` hold their bus voltage.
fn replay_point(case: &NetworkCase, avail: &Availability, scale: f64, dc: &DcOpfResult, deployed: &[bool]) -> AcOperatingPoint {
    let idx = case.bus_index();
    let mut point = AcOperatingPoint::from_dispatch(case, &dc.dispatch);
    for (k, g) in case.generators.iter().enumerate() {
        point.gen_on[k] = avail.gen_up[k] && g.fleet_index.is_none();
    }
    point.branch_up = avail.branch_up.clone();
    for (f, r) in case.fleet.iter().enumerate() {
        let b = idx[&r.deployment_bus];
        point.extra_p_mw[b] += dc.fleet_dispatch[f];
        if deployed.get(f).copied().unwrap_or(false) {
            point.support_vm[b] = Some(FLEET_VOLTAGE_SETPOINT);
        }
    }
    for (i, b) in case.buses.iter().enumerate() {
        let load = b.load_p * scale;
        let share = if load > 0.0 { dc.served[i] / load } else { 1.0 };
        point.load_p_mw[i] = dc.served[i];
        point.load_q_mvar[i] = b.load_q * scale * share;
    }
    point
}

/// AC power flow for a replay hour. A singular Jacobian is recorded as a
/// non-converged hour with zero voltages rather than ending the run.
fn replay_flow(case: &NetworkCase, point: &AcOperatingPoint) -> Result<AcPfResult> {
    match ac_power_flow(case, point) {
        Err(CoreError::Numerical(_)) => {
            let n = case.buses.len();
            Ok(AcPfResult {
                voltage_mag: vec![0.0; n],
                voltage_ang: vec![0.0; n],
                energized: vec![false; n],
                converged: false,
                iterations: 0,
                max_mismatch: f64::MAX,
            })
        }
        other => other,
    }
}

/// Phase 1: one DC OPF and AC power flow per hour on the intact network.
pub fn run_baseline(case: &NetworkCase, plan: &PhasePlan, params: &MarketParams) -> Result<(Vec<DcOpfResult>, Vec<AcPfResult>)> {
    let avail = Availability::intact(case);
    let opts = dc_options(params);
    let nb = case.buses.len();
    let mut dc: Vec<DcOpfResult> = Vec::with_capacity(plan.horizon_hours);
    let mut ac: Vec<AcPfResult> = Vec::with_capacity(plan.horizon_hours);
    for t in 1..=plan.horizon_hours {
        let f = plan.factor(t);
        // identical hours share a solve
        if let Some(prev) = (1..t).find(|&u| plan.factor(u) == f) {
            dc.push(dc[prev - 1].clone());
            ac.push(ac[prev - 1].clone());
            continue;
        }
        let r = dc_opf(case, &avail, &vec![f; nb], &[], &opts)?;
        let pf = ac_power_flow(case, &replay_point(case, &avail, f, &r, &[]))?;
        dc.push(r);
        ac.push(pf);
    }
    Ok((dc, ac))
}

fn load_profile(plan: &PhasePlan, nb: usize) -> Vec<Vec<f64>> {
    (1..=plan.horizon_hours).map(|t| vec![plan.factor(t); nb]).collect()
}

/// Phase 2 scenario generation: sample, price outage demand, reduce.
pub fn build_scenarios(
    case: &NetworkCase,
    hazard: &HazardConfig,
    plan: &PhasePlan,
    params: &MarketParams,
    baseline: &[DcOpfResult],
) -> Result<ScenarioSet> {
    let sampled = sample_scenarios(case, hazard, plan.scenario_count, plan.horizon_hours)?;
    let sampled = compute_all(case, &sampled, baseline, &load_profile(plan, case.buses.len()), &dc_options(params))?;
    let representatives = reduce_scenarios(&sampled, plan.clusters, hazard.seed)?;
    Ok(ScenarioSet {
        seed: hazard.seed,
        horizon_hours: plan.horizon_hours,
        sampled,
        representatives,
    })
}

/// Phase 2 clearing against a given set of representatives.
pub fn clear_market(
    case: &NetworkCase,
    representatives: &[OutageScenario],
    offers: &OfferConfig,
    params: &MarketParams,
    options: &RunOptions,
) -> Result<(BuildReport, MarketOutcome, Option<String>)> {
    let book = build_offer_book(&case.fleet, offers)?;
    if let Some(d) = validate_offer_book(&book, &case.fleet).into_iter().find(|d| d.severity == crate::network::Severity::Error) {
        return Err(CoreError::Validation(d.message));
    }
    let model = build_clearing_problem(case, representatives, &book, params)?;
    let lp = options.export_lp.then(|| write_lp(&model.problem));
    let solution = solve_milp(&model.problem, &options.limits)?;
    if solution.values.len() != model.problem.num_vars() {
        let status = solution.status.as_str();
        return Err(match solution.status {
            SolveStatus::GapLimit | SolveStatus::IterationLimit => CoreError::LimitReached(status.into()),
            _ => CoreError::Numerical(format!("market clearing ended with status {status}")),
        });
    }
    let outcome = extract_incumbent(&model, &solution)?;
    Ok((model.report(), outcome, lp))
}

/// Phase 3 for one representative.
fn replay_scenario(
    case: &NetworkCase,
    scenario: &OutageScenario,
    outcome: &MarketOutcome,
    plan: &PhasePlan,
    params: &MarketParams,
) -> Result<ScenarioReplay> {
    let avail = scenario.availability(case);
    let opts = dc_options(params);
    let nb = case.buses.len();
    let cleared = outcome
        .scenarios
        .iter()
        .find(|s| s.scenario_id == scenario.scenario_id)
        .ok_or_else(|| CoreError::Contract(format!("no outcome for scenario {}", scenario.scenario_id)))?;
    let deployed: Vec<bool> = case
        .fleet
        .iter()
        .map(|r| cleared.resources.iter().any(|o| o.label == r.label() && o.cleared))
        .collect();
    let mut hours = Vec::new();
    let mut before = 0.0;
    let mut after = 0.0;
    for (h, t) in plan.event_hours().enumerate() {
        let f = plan.factor(t);
        let scale = vec![f; nb];
        let pre = dc_opf(case, &avail, &scale, &[], &opts)?;
        before += pre.total_served();
        let pre_ac = replay_flow(case, &replay_point(case, &avail, f, &pre, &[]))?;
        let capacity: Vec<f64> = case
            .fleet
            .iter()
            .map(|r| {
                cleared
                    .resources
                    .iter()
                    .find(|o| o.label == r.label())
                    .map_or(0.0, |o| o.power.get(h).copied().unwrap_or(0.0))
            })
            .collect();
        let dc = dc_opf(case, &avail, &scale, &capacity, &opts)?;
        after += dc.total_served();
        let ac = replay_flow(case, &replay_point(case, &avail, f, &dc, &deployed))?;
        let violations = if ac.converged { check_voltage_limits(&ac, case)? } else { Vec::new() };
        hours.push(HourReplay {
            hour: t,
            pre_ac,
            fleet_capacity: capacity,
            dc,
            ac,
            violations,
        });
    }
    Ok(ScenarioReplay {
        scenario_id: scenario.scenario_id,
        weight: scenario.weight,
        served_before_mwh: before,
        served_after_mwh: after,
        hours,
    })
}

/// Traces over the whole horizon. Storage holds its start SoC before the
/// event and its last SoC after it; power and reserve are zero outside.
pub fn build_traces(case: &NetworkCase, outcome: &MarketOutcome, plan: &PhasePlan) -> Traces {
    let mut traces = Traces::default();
    let horizon = plan.horizon_hours;
    let mut expected: [BTreeMap<(usize, String), f64>; 3] = Default::default();
    for s in &outcome.scenarios {
        let sid = s.scenario_id.to_string();
        for r in &s.resources {
            let resource = case.fleet.iter().find(|f| f.label() == r.label);
            for t in 1..=horizon {
                let pos = s.hours.iter().position(|&u| u == t);
                let power = pos.map_or(0.0, |h| r.power[h]);
                let reserve = pos.map_or(0.0, |h| r.reserve[h]);
                let mut rows = vec![(1usize, power), (2, reserve)];
                if r.kind.is_storage() {
                    let start = resource.map_or(1.0, |f| f.start_soc());
                    let soc = match pos {
                        Some(h) => r.soc[h],
                        None if t < s.hours[0] => start,
                        None => r.soc.last().copied().unwrap_or(start),
                    };
                    rows.push((0, soc));
                }
                for (kind, value) in rows {
                    let list = match kind {
                        0 => &mut traces.soc,
                        1 => &mut traces.dispatch,
                        _ => &mut traces.reserve,
                    };
                    list.push(TracePoint {
                        scenario: sid.clone(),
                        hour: t,
                        resource: r.label.clone(),
                        value,
                    });
                    *expected[kind].entry((t, r.label.clone())).or_insert(0.0) += s.weight * value;
                }
            }
        }
    }
    for (kind, map) in expected.into_iter().enumerate() {
        let list = match kind {
            0 => &mut traces.soc,
            1 => &mut traces.dispatch,
            _ => &mut traces.reserve,
        };
        for ((hour, resource), value) in map {
            list.push(TracePoint {
                scenario: "expected".into(),
                hour,
                resource,
                value,
            });
        }
    }
    traces
}

/// Run all three phases.
pub fn run_three_phase(inputs: &StudyInputs, options: &RunOptions) -> Result<SimulationReport> {
    let start = Instant::now();
    let StudyInputs {
        case,
        hazard,
        offers,
        params,
        plan,
    } = inputs;
    plan.validate().map_err(|e| e.in_stage("plan"))?;
    hazard.validate(plan.horizon_hours).map_err(|e| e.in_stage("hazard"))?;
    if hazard.window() != plan.event_window {
        return Err(CoreError::Argument(format!(
            "hazard window {:?} differs from the plan's event window {:?}",
            hazard.window(),
            plan.event_window
        ))
        .in_stage("plan"));
    }
    if params.horizon_hours != plan.horizon_hours {
        return Err(CoreError::Argument("market horizon differs from the plan horizon".into()).in_stage("plan"));
    }
    let config_hash = inputs.config_hash()?;

    let (baseline, baseline_voltages) = run_baseline(case, plan, params).map_err(|e| e.in_stage("phase 1"))?;
    let scenarios = build_scenarios(case, hazard, plan, params, &baseline).map_err(|e| e.in_stage("scenarios"))?;
    let (build, outcome, lp_text) =
        clear_market(case, &scenarios.representatives, offers, params, options).map_err(|e| e.in_stage("phase 2"))?;
    let replay = scenarios
        .representatives
        .par_iter()
        .map(|s| replay_scenario(case, s, &outcome, plan, params))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("phase 3"))?;
    let traces = build_traces(case, &outcome, plan);
    Ok(SimulationReport {
        plan: plan.clone(),
        seed: hazard.seed,
        config_hash,
        baseline,
        baseline_voltages,
        scenarios,
        build,
        outcome,
        replay,
        traces,
        lp_text,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn fmt_value(v: f64) -> String {
    // avoid "-0.000000" in reports
    let s = format!("{v:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.000000".into()
    } else {
        s
    }
}

/// `quantity,value` rows in the fixed report order.
pub fn costs_csv(outcome: &MarketOutcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "value"])?;
    for row in &outcome.table {
        w.write_record([row.quantity.clone(), fmt_value(row.value)])?;
    }
    crate::finish_csv(w)
}

/// `scenario,hour,resource,value`.
pub fn trace_csv(points: &[TracePoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "hour", "resource", "value"])?;
    for p in points {
        w.write_record([p.scenario.clone(), p.hour.to_string(), p.resource.clone(), fmt_value(p.value)])?;
    }
    crate::finish_csv(w)
}

/// `phase,scenario,hour,bus,energized,converged,vm_pu,va_rad`; baseline
/// hours use scenario `baseline`.
pub fn voltage_report_csv(case: &NetworkCase, report: &SimulationReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["phase", "scenario", "hour", "bus", "energized", "converged", "vm_pu", "va_rad"])?;
    let mut put = |phase: &str, scenario: &str, hour: usize, pf: &AcPfResult| -> Result<()> {
        for (i, b) in case.buses.iter().enumerate() {
            w.write_record([
                phase.to_string(),
                scenario.to_string(),
                hour.to_string(),
                b.id.to_string(),
                pf.energized[i].to_string(),
                pf.converged.to_string(),
                fmt_value(pf.voltage_mag[i]),
                fmt_value(pf.voltage_ang[i]),
            ])?;
        }
        Ok(())
    };
    for (t, pf) in report.baseline_voltages.iter().enumerate() {
        put("1", "baseline", t + 1, pf)?;
    }
    for phase in ["2", "3"] {
        for r in &report.replay {
            for h in &r.hours {
                let pf = if phase == "2" { &h.pre_ac } else { &h.ac };
                put(phase, &r.scenario_id.to_string(), h.hour, pf)?;
            }
        }
    }
    crate::finish_csv(w)
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    status: &'static str,
    objective: f64,
    best_bound: f64,
    nodes: usize,
    build: &'a BuildReport,
    costs: &'a crate::market::CostComponents,
    scenarios: &'a [crate::market::ScenarioOutcome],
    replay: Vec<ReplaySummary>,
    voltage_violations: Vec<ViolationRow>,
    non_converged: Vec<(usize, usize)>,
    values: &'a BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct ReplaySummary {
    scenario_id: usize,
    weight: f64,
    served_before_mwh: f64,
    served_after_mwh: f64,
}

#[derive(Serialize)]
struct ViolationRow {
    scenario_id: usize,
    hour: usize,
    bus: usize,
    vm: f64,
    side: crate::acpf::LimitSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub status: String,
    pub wall_time_s: f64,
    pub files: Vec<String>,
}

/// Render every output file in memory, name to contents.
pub fn render_report(case: &NetworkCase, report: &SimulationReport, plots: bool) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    files.insert("costs.csv".to_string(), costs_csv(&report.outcome)?);
    files.insert("soc_traces.csv".to_string(), trace_csv(&report.traces.soc)?);
    files.insert("dispatch_traces.csv".to_string(), trace_csv(&report.traces.dispatch)?);
    files.insert("reserve_traces.csv".to_string(), trace_csv(&report.traces.reserve)?);
    files.insert("voltages.csv".to_string(), voltage_report_csv(case, report)?);
    files.insert("scenarios.json".to_string(), report.scenarios.to_json()?);
    let o = &report.outcome;
    let solution = SolutionFile {
        status: o.status.as_str(),
        objective: o.objective,
        best_bound: o.best_bound,
        nodes: o.nodes,
        build: &report.build,
        costs: &o.costs,
        scenarios: &o.scenarios,
        replay: report
            .replay
            .iter()
            .map(|r| ReplaySummary {
                scenario_id: r.scenario_id,
                weight: r.weight,
                served_before_mwh: r.served_before_mwh,
                served_after_mwh: r.served_after_mwh,
            })
            .collect(),
        voltage_violations: report
            .voltage_violations()
            .map(|(s, h, v)| ViolationRow {
                scenario_id: s,
                hour: h,
                bus: v.bus,
                vm: v.vm,
                side: v.side,
            })
            .collect(),
        non_converged: report.non_converged(),
        values: &o.values,
    };
    files.insert("solution.json".to_string(), serde_json::to_string_pretty(&solution)?);
    if let Some(lp) = &report.lp_text {
        files.insert("market.lp".to_string(), lp.clone());
    }
    if plots {
        files.insert("soc_traces.svg".to_string(), svg_chart("SoC (p.u.)", &report.traces.soc));
        files.insert("dispatch_traces.svg".to_string(), svg_chart("Discharge (MW)", &report.traces.dispatch));
        files.insert("reserve_traces.svg".to_string(), svg_chart("Reserve", &report.traces.reserve));
    }
    let manifest = Manifest {
        tool: "eventmarket".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: report.seed,
        config_hash: report.config_hash.clone(),
        status: o.status.as_str().into(),
        wall_time_s: report.wall_time_s,
        files: files.keys().cloned().collect(),
    };
    files.insert("manifest.json".to_string(), serde_json::to_string_pretty(&manifest)?);
    Ok(files)
}

/// Write rendered files into `out_dir` through a sibling staging directory
/// that is renamed into place. Returns the written paths.
pub fn write_files(files: &BTreeMap<String, String>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| CoreError::io(&parent, e))?;
    let name = out_dir
        .file_name()
        .ok_or_else(|| CoreError::Argument(format!("{} is not a directory name", out_dir.display())))?;
    let staging = parent.join(format!(".{}.staging-{}", name.to_string_lossy(), std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| CoreError::io(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| CoreError::io(&staging, e))?;
    let result = (|| {
        for (file, text) in files {
            let p = staging.join(file);
            fs::write(&p, text).map_err(|e| CoreError::io(&p, e))?;
        }
        if out_dir.exists() {
            fs::remove_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
        }
        fs::rename(&staging, out_dir).map_err(|e| CoreError::io(out_dir, e))
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result?;
    Ok(files.keys().map(|f| out_dir.join(f)).collect())
}

/// Render and write the report.
pub fn emit_report(case: &NetworkCase, report: &SimulationReport, out_dir: &Path, plots: bool) -> Result<Vec<PathBuf>> {
    write_files(&render_report(case, report, plots)?, out_dir)
}

/// Minimal SVG line chart of the `expected` series, one polyline per resource.
pub fn svg_chart(title: &str, points: &[TracePoint]) -> String {
    let mut series: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for p in points.iter().filter(|p| p.scenario == "expected") {
        series.entry(&p.resource).or_default().push((p.hour, p.value));
    }
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let max_hour = points.iter().map(|p| p.hour).max().unwrap_or(1).max(2) as f64;
    let max_v = points.iter().map(|p| p.value).fold(0.0f64, f64::max).max(1e-9);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="20" font-family="sans-serif" font-size="14">{title}</text>"#);
    let _ = writeln!(
        s,
        r#"<polyline points="{pad},{pad} {pad},{} {},{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(t, v)| {
                let x = pad + (t as f64 - 1.0) / (max_hour - 1.0) * (w - 2.0 * pad);
                let y = h - pad - v / max_v * (h - 2.0 * pad);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let c = colors[i % colors.len()];
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}"/>"#, coords.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{c}">{name}</text>"#,
            w - pad - 60.0,
            pad + 14.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_partitions_the_horizon() {
        let plan = PhasePlan::new(12, (6, 9));
        plan.validate().unwrap();
        let mut all: Vec<usize> = plan.pre_event_hours().collect();
        all.extend(plan.event_hours());
        all.extend(plan.post_event_hours());
        assert_eq!(all, (1..=12).collect::<Vec<_>>());
    }

    #[test]
    fn window_outside_horizon_is_rejected() {
        assert!(PhasePlan::new(12, (6, 13)).validate().is_err());
        assert!(PhasePlan::new(12, (0, 3)).validate().is_err());
        let mut p = PhasePlan::new(4, (1, 4));
        p.load_profile = vec![1.0; 3];
        assert!(p.validate().is_err());
    }

    #[test]
    fn negative_zero_is_printed_as_zero() {
        assert_eq!(fmt_value(-1e-12), "0.000000");
        assert_eq!(fmt_value(-2.5), "-2.500000");
    }

    #[test]
    fn svg_has_one_line_per_resource() {
        let pts: Vec<TracePoint> = ["ESR1", "EV1"]
            .iter()
            .flat_map(|r| {
                (1..=3).map(move |t| TracePoint {
                    scenario: "expected".into(),
                    hour: t,
                    resource: r.to_string(),
                    value: t as f64,
                })
            })
            .collect();
        let svg = svg_chart("x", &pts);
        assert_eq!(svg.matches("<polyline").count(), 3);
    }
}

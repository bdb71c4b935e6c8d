//! The event-market clearing MILP and the outcome read back from it.
//!
//! Every quantity is indexed by scenario, so each scenario forms its own
//! block of the MILP and the solver handles them independently. Row names
//! start with an `eqN_` tag naming the constraint family they belong to.
//!
//! Units: power in MW, storage energy in MWh, state of charge in p.u. of
//! the storage energy capacity, one-hour steps (MW and MWh coincide per
//! step).

use std::collections::BTreeMap;

use eventmarket_milp::{MilpProblem, MilpSolution, Relation, Sense, SolveStatus, VarId};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fleet::{transport_cost, MobileResource, ResourceKind};
use crate::network::NetworkCase;
use crate::offers::{GeneratorOffer, OfferBook, StorageOffer};
use crate::scenario::OutageScenario;

/// A discharging block must deliver at least this share of its power cap.
pub const MIN_DISCHARGE_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReserveMode {
    /// Outage demand <= (1 + r) x supply.
    AsPrinted,
    /// (1 + r) x outage demand <= supply + reserve.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub reserve_factor: f64,
    pub horizon_hours: usize,
    pub loss_fraction: f64,
    pub voll: f64,
    pub reserve_mode: ReserveMode,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            reserve_factor: 0.10,
            horizon_hours: 12,
            loss_fraction: 0.03,
            voll: 1000.0,
            reserve_mode: ReserveMode::AsPrinted,
        }
    }
}

#[derive(Debug, Clone)]
enum Offer {
    Dg(GeneratorOffer),
    Storage(StorageOffer),
}

#[derive(Debug, Clone)]
struct Participant {
    resource: MobileResource,
    offer: Offer,
}

#[derive(Debug, Clone)]
struct DgVars {
    part: usize,
    pg: Vec<VarId>,
    prs: Vec<VarId>,
    on: Vec<VarId>,
    rs_on: Vec<VarId>,
    start: Vec<VarId>,
    stop: Vec<VarId>,
    cap: VarId,
}

#[derive(Debug, Clone)]
struct StoreVars {
    part: usize,
    p: Vec<VarId>,
    on: Vec<VarId>,
    soc: Vec<VarId>,
    dod_now: Vec<VarId>,
    dod_prev: Vec<VarId>,
    cleared: VarId,
    reserve_pu: Option<VarId>,
    reserve_mwh: Option<VarId>,
}

#[derive(Debug, Clone)]
struct ScenarioVars {
    scenario_id: usize,
    weight: f64,
    hours: Vec<usize>,
    areas: Vec<usize>,
    served: Vec<Vec<VarId>>,
    price: Vec<Vec<f64>>,
    dgs: Vec<DgVars>,
    stores: Vec<StoreVars>,
}

/// The MILP plus the bookkeeping needed to read a solution back.
#[derive(Debug, Clone)]
pub struct ClearingModel {
    pub problem: MilpProblem,
    pub params: MarketParams,
    parts: Vec<Participant>,
    scen: Vec<ScenarioVars>,
}

/// Variable and row counts, binaries and rows broken down by tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub variables: usize,
    pub binaries: usize,
    pub constraints: usize,
    pub rows_by_tag: BTreeMap<String, usize>,
}

/// The `eqN` prefix of a row name.
pub fn row_tag(name: &str) -> &str {
    name.split('_').next().unwrap_or(name)
}

impl ClearingModel {
    pub fn report(&self) -> BuildReport {
        let mut rows_by_tag = BTreeMap::new();
        for c in &self.problem.constraints {
            *rows_by_tag.entry(row_tag(&c.name).to_string()).or_insert(0) += 1;
        }
        BuildReport {
            variables: self.problem.num_vars(),
            binaries: self.problem.num_binaries(),
            constraints: self.problem.constraints.len(),
            rows_by_tag,
        }
    }

    pub fn participants(&self) -> impl Iterator<Item = &MobileResource> {
        self.parts.iter().map(|p| &p.resource)
    }
}

fn participants(case: &NetworkCase, book: &OfferBook) -> Result<Vec<Participant>> {
    let mut out = Vec::new();
    let lookup = |kind: ResourceKind, block: usize| {
        case.fleet
            .iter()
            .find(|r| r.kind == kind && r.block_id == block)
            .cloned()
            .ok_or_else(|| CoreError::Validation(format!("offer {kind}{block} has no matching resource in the case")))
    };
    for o in &book.generator_offers {
        out.push(Participant {
            resource: lookup(ResourceKind::Dg, o.block_id)?,
            offer: Offer::Dg(o.clone()),
        });
    }
    for kind in [ResourceKind::Esr, ResourceKind::Ev] {
        for o in book.storage_offers(kind) {
            if kind == ResourceKind::Ev && o.reserve_fraction != 0.0 {
                return Err(CoreError::Validation(format!("EV{}: {}", o.block_id, crate::offers::EV_RESERVE_RULE)));
            }
            out.push(Participant {
                resource: lookup(kind, o.block_id)?,
                offer: Offer::Storage(o.clone()),
            });
        }
    }
    Ok(out)
}

/// Rows forcing `z = x y` for binary `x` and `y` in `[lo, hi]`.
fn mccormick(p: &mut MilpProblem, name: &str, z: VarId, y: VarId, x: VarId, lo: f64, hi: f64) {
    p.add_constraint(format!("{name}_a"), vec![(z, 1.0), (x, -lo)], Relation::Ge, 0.0);
    p.add_constraint(format!("{name}_b"), vec![(z, 1.0), (x, -hi)], Relation::Le, 0.0);
    p.add_constraint(format!("{name}_c"), vec![(z, 1.0), (y, -1.0), (x, -hi)], Relation::Ge, -hi);
    p.add_constraint(format!("{name}_d"), vec![(z, 1.0), (y, -1.0), (x, -lo)], Relation::Le, -lo);
}

/// Assemble the clearing MILP (maximise expected social welfare).
pub fn build_clearing_problem(
    case: &NetworkCase,
    scenarios: &[OutageScenario],
    book: &OfferBook,
    params: &MarketParams,
) -> Result<ClearingModel> {
    if scenarios.is_empty() {
        return Err(CoreError::Argument("no scenarios to clear".into()));
    }
    let wsum: f64 = scenarios.iter().map(|s| s.weight).sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(CoreError::Argument(format!("scenario weights sum to {wsum}, not 1")));
    }
    if params.reserve_factor < 0.0 || params.horizon_hours == 0 {
        return Err(CoreError::Argument("reserve_factor must be >= 0 and horizon >= 1".into()));
    }
    let parts = participants(case, book)?;
    let mut p = MilpProblem::new("event_market", Sense::Maximize);
    let lf = params.loss_fraction;
    let mut scen = Vec::with_capacity(scenarios.len());

    for (si, s) in scenarios.iter().enumerate() {
        let sn = si + 1;
        let w = s.weight;
        let (t0, t1) = s.duration_window;
        if t1 > params.horizon_hours || t1 > s.horizon() || t0 == 0 || t0 > t1 {
            return Err(CoreError::Argument(format!("scenario {}: window outside the horizon", s.scenario_id)));
        }
        let hours: Vec<usize> = (t0..=t1).collect();
        let nh = hours.len();

        // outage demand served, per area and hour
        let mut served = vec![Vec::with_capacity(nh); s.areas.len()];
        let mut active = Vec::with_capacity(nh);
        for &t in &hours {
            active.push(p.add_binary(format!("zd_t{t}_s{sn}"), 0.0));
        }
        for (j, &a) in s.areas.iter().enumerate() {
            for (h, &t) in hours.iter().enumerate() {
                let cap = s.outage_demand[j][t - 1];
                let v = p.add_var(format!("pd_a{a}_t{t}_s{sn}"), 0.0, cap, w * s.outage_price[j][t - 1]);
                p.add_constraint(format!("eq11_outage_a{a}_t{t}_s{sn}"), vec![(v, 1.0), (active[h], -cap)], Relation::Le, 0.0);
                served[j].push(v);
            }
        }

        let mut dgs = Vec::new();
        let mut stores = Vec::new();
        for (pi, part) in parts.iter().enumerate() {
            let r = &part.resource;
            let l = r.label();
            match &part.offer {
                Offer::Dg(o) => {
                    let q = o.quantity;
                    let rq = o.reserve_quantity;
                    let mut d = DgVars {
                        part: pi,
                        pg: vec![],
                        prs: vec![],
                        on: vec![],
                        rs_on: vec![],
                        start: vec![],
                        stop: vec![],
                        cap: p.add_var(format!("capg_{l}_s{sn}"), 0.0, q.max(rq), -w * r.transport_rate * r.distance_miles),
                    };
                    for &t in &hours {
                        let pg = p.add_var(format!("pg_{l}_t{t}_s{sn}"), 0.0, q, -w * o.price);
                        let prs = p.add_var(format!("pgrs_{l}_t{t}_s{sn}"), 0.0, rq, -w * o.reserve_price);
                        let on = p.add_binary(format!("yg_{l}_t{t}_s{sn}"), 0.0);
                        let rs_on = p.add_binary(format!("ygrs_{l}_t{t}_s{sn}"), 0.0);
                        let st = p.add_binary(format!("u_{l}_t{t}_s{sn}"), -w * o.startup_price);
                        let sp = p.add_binary(format!("v_{l}_t{t}_s{sn}"), -w * o.shutdown_price);
                        p.add_constraint(format!("eq12_dispatch_cap_{l}_t{t}_s{sn}"), vec![(pg, 1.0), (on, -q)], Relation::Le, 0.0);
                        p.add_constraint(format!("eq10_reserve_cap_{l}_t{t}_s{sn}"), vec![(prs, 1.0), (rs_on, -rq)], Relation::Le, 0.0);
                        p.add_constraint(format!("eq8_headroom_{l}_t{t}_s{sn}"), vec![(pg, 1.0), (prs, 1.0)], Relation::Le, r.power_cap_mw);
                        // previous commitment is 0 before the window
                        let mut link = vec![(st, 1.0), (sp, -1.0), (on, -1.0)];
                        if let Some(&prev) = d.on.last() {
                            link.push((prev, 1.0));
                        }
                        p.add_constraint(format!("eq4_commit_{l}_t{t}_s{sn}"), link, Relation::Eq, 0.0);
                        p.add_constraint(format!("eq4_startstop_{l}_t{t}_s{sn}"), vec![(st, 1.0), (sp, 1.0)], Relation::Le, 1.0);
                        p.add_constraint(format!("eq5_moved_{l}_t{t}_s{sn}"), vec![(d.cap, 1.0), (on, -q)], Relation::Ge, 0.0);
                        p.add_constraint(format!("eq5_moved_rs_{l}_t{t}_s{sn}"), vec![(d.cap, 1.0), (rs_on, -q.max(rq))], Relation::Ge, 0.0);
                        d.pg.push(pg);
                        d.prs.push(prs);
                        d.on.push(on);
                        d.rs_on.push(rs_on);
                        d.start.push(st);
                        d.stop.push(sp);
                    }
                    dgs.push(d);
                }
                Offer::Storage(o) => {
                    let e = r.energy_capacity_mwh;
                    let (smin, smax) = (r.soc_min, r.soc_max);
                    let s0 = r.start_soc();
                    let pmax = r.power_cap_mw;
                    let deg = r.degradation;
                    let esr = r.kind == ResourceKind::Esr;
                    let move_cost = transport_cost(r, o.capacity_fraction * smax * e);
                    let cleared = p.add_binary(format!("xc_{l}_s{sn}"), -w * move_cost);
                    let (reserve_pu, reserve_mwh) = if esr {
                        let rpu = p.add_var(format!("socrs_{l}_s{sn}"), 0.0, o.reserve_fraction * smax, 0.0);
                        let rmwh = p.add_var(format!("soccrs_{l}_s{sn}"), 0.0, smax * e, -w * o.reserve_price);
                        p.add_constraint(
                            format!("eq13_reserve_cap_{l}_s{sn}"),
                            vec![(rpu, 1.0), (cleared, -o.reserve_fraction * smax)],
                            Relation::Le,
                            0.0,
                        );
                        // rmwh >= e rpu - (1 - X) smax e
                        p.add_constraint(
                            format!("eq15_band_low_{l}_s{sn}"),
                            vec![(rmwh, 1.0), (rpu, -e), (cleared, -smax * e)],
                            Relation::Ge,
                            -smax * e,
                        );
                        p.add_constraint(format!("eq16_band_high_{l}_s{sn}"), vec![(rmwh, 1.0), (rpu, -e)], Relation::Le, 0.0);
                        (Some(rpu), Some(rmwh))
                    } else {
                        (None, None)
                    };
                    let mut sv = StoreVars {
                        part: pi,
                        p: vec![],
                        on: vec![],
                        soc: vec![],
                        dod_now: vec![],
                        dod_prev: vec![],
                        cleared,
                        reserve_pu,
                        reserve_mwh,
                    };
                    for &t in &hours {
                        let pw = p.add_var(format!("pdch_{l}_t{t}_s{sn}"), 0.0, pmax, -w * deg.gamma);
                        let on = p.add_binary(format!("x_{l}_t{t}_s{sn}"), -w * deg.psi);
                        let soc = p.add_var(format!("soc_{l}_t{t}_s{sn}"), smin, smax, 0.0);
                        let dn = p.add_var(format!("dodn_{l}_t{t}_s{sn}"), 0.0, smax, -w * deg.alpha);
                        let dp = p.add_var(format!("dodp_{l}_t{t}_s{sn}"), 0.0, smax, -w * deg.beta);
                        let prev = sv.soc.last().copied();
                        // soc(t) = soc(t-1) - p / (eta e)
                        let k = 1.0 / (r.efficiency_dch * e);
                        let mut dyn_row = vec![(soc, 1.0), (pw, k)];
                        let dyn_rhs = match prev {
                            Some(v) => {
                                dyn_row.push((v, -1.0));
                                0.0
                            }
                            None => s0,
                        };
                        p.add_constraint(format!("eq19_soc_{l}_t{t}_s{sn}"), dyn_row, Relation::Eq, dyn_rhs);
                        p.add_constraint(format!("eq21_dch_max_{l}_t{t}_s{sn}"), vec![(pw, 1.0), (on, -pmax)], Relation::Le, 0.0);
                        p.add_constraint(
                            format!("eq21_dch_min_{l}_t{t}_s{sn}"),
                            vec![(pw, 1.0), (on, -MIN_DISCHARGE_SHARE * pmax)],
                            Relation::Ge,
                            0.0,
                        );
                        p.add_constraint(format!("eq18_cleared_{l}_t{t}_s{sn}"), vec![(on, 1.0), (cleared, -1.0)], Relation::Le, 0.0);
                        if let Some(rpu) = reserve_pu {
                            p.add_constraint(format!("eq20_floor_{l}_t{t}_s{sn}"), vec![(soc, 1.0), (rpu, -1.0)], Relation::Ge, smin);
                        }
                        // e (soc(t-1) - soc(t)) <= G e (soc(t-1) - rs - smin) + (1 - x) e
                        let g = o.dch_fraction;
                        let mut lim = vec![(soc, -e), (on, e)];
                        let mut rhs = e - g * e * smin;
                        match prev {
                            Some(v) => lim.push((v, e - g * e)),
                            None => rhs -= (e - g * e) * s0,
                        }
                        if let Some(rpu) = reserve_pu {
                            lim.push((rpu, g * e));
                        }
                        p.add_constraint(format!("eq17_dch_limit_{l}_t{t}_s{sn}"), lim, Relation::Le, rhs);
                        // energy drawn so far stays within the cleared share
                        p.add_constraint(
                            format!("eq14_energy_cap_{l}_t{t}_s{sn}"),
                            vec![(soc, -1.0), (cleared, -o.capacity_fraction * smax)],
                            Relation::Le,
                            -s0,
                        );
                        // dod_now = x soc(t), dod_prev = x soc(t-1): McCormick envelopes
                        // over [smin, smax], exact at binary x
                        mccormick(&mut p, &format!("eq4_dod_now_{l}_t{t}_s{sn}"), dn, soc, on, smin, smax);
                        match prev {
                            Some(v) => mccormick(&mut p, &format!("eq4_dod_prev_{l}_t{t}_s{sn}"), dp, v, on, smin, smax),
                            None => {
                                p.add_constraint(format!("eq4_dod_prev_{l}_t{t}_s{sn}"), vec![(dp, 1.0), (on, -s0)], Relation::Eq, 0.0);
                            }
                        }
                        // x soc(t) = x soc(t-1) - p / (eta e) since p = 0 whenever x = 0
                        p.add_constraint(format!("eq4_dod_link_{l}_t{t}_s{sn}"), vec![(dn, 1.0), (dp, -1.0), (pw, k)], Relation::Eq, 0.0);
                        sv.p.push(pw);
                        sv.on.push(on);
                        sv.soc.push(soc);
                        sv.dod_now.push(dn);
                        sv.dod_prev.push(dp);
                    }
                    stores.push(sv);
                }
            }
        }

        for (h, &t) in hours.iter().enumerate() {
            // served demand plus losses equals fleet supply
            let mut bal: Vec<(VarId, f64)> = served.iter().map(|row| (row[h], 1.0 + lf)).collect();
            let mut supply: Vec<(VarId, f64)> = Vec::new();
            for d in &dgs {
                supply.push((d.pg[h], 1.0));
            }
            for sv in &stores {
                supply.push((sv.p[h], 1.0));
            }
            bal.extend(supply.iter().map(|&(v, a)| (v, -a)));
            p.add_constraint(format!("eq6_balance_t{t}_s{sn}"), bal, Relation::Eq, 0.0);

            let rf = params.reserve_factor;
            let row: Vec<(VarId, f64)> = match params.reserve_mode {
                ReserveMode::AsPrinted => served
                    .iter()
                    .map(|row| (row[h], 1.0))
                    .chain(supply.iter().map(|&(v, a)| (v, -(1.0 + rf) * a)))
                    .collect(),
                ReserveMode::Strict => {
                    let mut row: Vec<(VarId, f64)> = served.iter().map(|row| (row[h], 1.0 + rf)).collect();
                    row.extend(supply.iter().map(|&(v, a)| (v, -a)));
                    row.extend(dgs.iter().map(|d| (d.prs[h], -1.0)));
                    for sv in &stores {
                        if let Some(rpu) = sv.reserve_pu {
                            // reserve power = reserve share x energy capacity
                            row.push((rpu, -parts[sv.part].resource.energy_capacity_mwh));
                        }
                    }
                    row
                }
            };
            p.add_constraint(format!("eq7_reserve_t{t}_s{sn}"), row, Relation::Le, 0.0);
        }

        scen.push(ScenarioVars {
            scenario_id: s.scenario_id,
            weight: w,
            hours,
            areas: s.areas.clone(),
            served,
            price: s.outage_price.clone(),
            dgs,
            stores,
        });
    }
    p.validate()?;
    Ok(ClearingModel {
        problem: p,
        params: params.clone(),
        parts,
        scen,
    })
}

/// Cost components in dollars.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostComponents {
    /// Value of restored outage demand.
    pub outage_value: f64,
    pub reserve_cost: f64,
    pub schedule_cost: f64,
    pub transport_cost: f64,
    pub social_welfare: f64,
}

impl CostComponents {
    fn finish(mut self) -> Self {
        self.social_welfare = self.outage_value - self.reserve_cost - self.schedule_cost - self.transport_cost;
        self
    }

    fn add_scaled(&mut self, other: &CostComponents, w: f64) {
        self.outage_value += w * other.outage_value;
        self.reserve_cost += w * other.reserve_cost;
        self.schedule_cost += w * other.schedule_cost;
        self.transport_cost += w * other.transport_cost;
        self.social_welfare += w * other.social_welfare;
    }
}

/// What one resource did in one scenario. Hour vectors cover the event window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceOutcome {
    pub label: String,
    pub kind: ResourceKind,
    pub deployment_bus: usize,
    /// MW per hour.
    pub power: Vec<f64>,
    /// DG: reserve MW per hour; ESR: reserve MWh (constant over the window).
    pub reserve: Vec<f64>,
    /// Storage only, p.u. per hour.
    pub soc: Vec<f64>,
    pub on: Vec<bool>,
    /// Mobilised for this scenario (DG committed in any hour, storage cleared).
    pub cleared: bool,
    /// ESR reserve in p.u. of capacity.
    pub reserve_pu: f64,
    pub energy_mwh: f64,
    /// DG: energy plus start/stop charges; storage: degradation.
    pub schedule_cost: f64,
    pub reserve_cost: f64,
    pub transport_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario_id: usize,
    pub weight: f64,
    pub hours: Vec<usize>,
    pub areas: Vec<usize>,
    /// MW per (area, hour).
    pub served: Vec<Vec<f64>>,
    pub resources: Vec<ResourceOutcome>,
    pub costs: CostComponents,
}

impl ScenarioOutcome {
    pub fn served_in_hour(&self, h: usize) -> f64 {
        self.served.iter().map(|row| row[h]).sum()
    }

    pub fn supply_in_hour(&self, h: usize) -> f64 {
        self.resources.iter().map(|r| r.power[h]).sum()
    }
}

/// One labelled Table-II-style quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub quantity: String,
    pub value: f64,
}

pub const TABLE_LABELS: [&str; 14] = [
    "Avg. ESR cleared (MWh)",
    "Avg. EV cleared (MWh)",
    "Avg. DG cleared (MW)",
    "Avg. DG Reserve cleared (MW)",
    "Avg. ESR Reserve cleared (MWh)",
    "DG Sched. cost ($)",
    "DG Reserve cost ($)",
    "ESR Reserve cost ($)",
    "ESR deg. cost ($)",
    "EV deg. cost ($)",
    "DG transit cost ($)",
    "ESR transit cost ($)",
    "EV transit cost ($)",
    "Social Welfare",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub status: SolveStatus,
    pub objective: f64,
    pub best_bound: f64,
    pub nodes: usize,
    /// Scenario-weighted expectation.
    pub costs: CostComponents,
    pub scenarios: Vec<ScenarioOutcome>,
    pub table: Vec<TableRow>,
    /// Every variable by name.
    pub values: BTreeMap<String, f64>,
}

impl MarketOutcome {
    pub fn table_value(&self, label: &str) -> Option<f64> {
        self.table.iter().find(|r| r.quantity == label).map(|r| r.value)
    }

    /// Scenario-weighted energy delivered by the whole fleet, MWh.
    pub fn expected_fleet_energy(&self) -> f64 {
        self.scenarios
            .iter()
            .map(|s| s.weight * s.resources.iter().map(|r| r.energy_mwh).sum::<f64>())
            .sum()
    }
}

/// Read a solution back; the solve must have reached optimality.
pub fn extract_outcome(model: &ClearingModel, solution: &MilpSolution) -> Result<MarketOutcome> {
    if solution.status != SolveStatus::Optimal {
        return Err(CoreError::Contract(format!(
            "market outcome needs an optimal solution, got {}",
            solution.status.as_str()
        )));
    }
    extract_incumbent(model, solution)
}

/// Like [`extract_outcome`] but accepts any solution that carries a point
/// (for runs stopped by a limit).
pub fn extract_incumbent(model: &ClearingModel, solution: &MilpSolution) -> Result<MarketOutcome> {
    if solution.values.len() != model.problem.num_vars() {
        return Err(CoreError::Contract(format!(
            "solution has no point (status {})",
            solution.status.as_str()
        )));
    }
    let x = |v: VarId| solution.values[v.0];
    let bin = |v: VarId| x(v) > 0.5;
    let mut scenarios = Vec::with_capacity(model.scen.len());
    let mut total = CostComponents::default();
    for sv in &model.scen {
        let mut costs = CostComponents::default();
        let served: Vec<Vec<f64>> = sv.served.iter().map(|row| row.iter().map(|&v| x(v)).collect()).collect();
        for (j, row) in served.iter().enumerate() {
            for (h, &t) in sv.hours.iter().enumerate() {
                costs.outage_value += sv.price[j][t - 1] * row[h];
            }
        }
        let mut resources = Vec::new();
        for d in &sv.dgs {
            let part = &model.parts[d.part];
            let Offer::Dg(o) = &part.offer else { unreachable!() };
            let r = &part.resource;
            let power: Vec<f64> = d.pg.iter().map(|&v| x(v)).collect();
            let reserve: Vec<f64> = d.prs.iter().map(|&v| x(v)).collect();
            let starts: f64 = d.start.iter().map(|&v| x(v)).sum();
            let stops: f64 = d.stop.iter().map(|&v| x(v)).sum();
            let energy: f64 = power.iter().sum();
            let sched = o.price * energy + o.startup_price * starts + o.shutdown_price * stops;
            let res_cost = o.reserve_price * reserve.iter().sum::<f64>();
            let moved = transport_cost(r, x(d.cap));
            costs.schedule_cost += sched;
            costs.reserve_cost += res_cost;
            costs.transport_cost += moved;
            let on: Vec<bool> = d.on.iter().map(|&v| bin(v)).collect();
            let cleared = on.iter().any(|&b| b) || d.rs_on.iter().any(|&v| bin(v));
            resources.push(ResourceOutcome {
                label: r.label(),
                kind: r.kind,
                deployment_bus: r.deployment_bus,
                power,
                reserve,
                soc: vec![],
                on,
                cleared,
                reserve_pu: 0.0,
                energy_mwh: energy,
                schedule_cost: sched,
                reserve_cost: res_cost,
                transport_cost: moved,
            });
        }
        for st in &sv.stores {
            let part = &model.parts[st.part];
            let Offer::Storage(o) = &part.offer else { unreachable!() };
            let r = &part.resource;
            let power: Vec<f64> = st.p.iter().map(|&v| x(v)).collect();
            let soc: Vec<f64> = st.soc.iter().map(|&v| x(v)).collect();
            let onf: Vec<f64> = st.on.iter().map(|&v| x(v).round()).collect();
            let deg = r.degradation;
            let mut sched = 0.0;
            let mut prev = r.start_soc();
            for h in 0..power.len() {
                sched += deg.hourly_cost(onf[h] * soc[h], onf[h] * prev, power[h], onf[h]);
                prev = soc[h];
            }
            let cleared = bin(st.cleared);
            let reserve_mwh = st.reserve_mwh.map_or(0.0, x);
            let reserve_pu = st.reserve_pu.map_or(0.0, x);
            let res_cost = o.reserve_price * reserve_mwh;
            let moved = if cleared {
                transport_cost(r, o.capacity_fraction * r.soc_max * r.energy_capacity_mwh)
            } else {
                0.0
            };
            costs.schedule_cost += sched;
            costs.reserve_cost += res_cost;
            costs.transport_cost += moved;
            resources.push(ResourceOutcome {
                label: r.label(),
                kind: r.kind,
                deployment_bus: r.deployment_bus,
                energy_mwh: power.iter().sum(),
                reserve: vec![reserve_mwh; power.len()],
                power,
                soc,
                on: onf.iter().map(|&v| v > 0.5).collect(),
                cleared,
                reserve_pu,
                schedule_cost: sched,
                reserve_cost: res_cost,
                transport_cost: moved,
            });
        }
        let costs = costs.finish();
        total.add_scaled(&costs, sv.weight);
        scenarios.push(ScenarioOutcome {
            scenario_id: sv.scenario_id,
            weight: sv.weight,
            hours: sv.hours.clone(),
            areas: sv.areas.clone(),
            served,
            resources,
            costs,
        });
    }
    let values = model
        .problem
        .variables
        .iter()
        .zip(&solution.values)
        .map(|(v, &val)| (v.name.clone(), val))
        .collect();
    let table = table_rows(&scenarios, &total);
    Ok(MarketOutcome {
        status: solution.status,
        objective: solution.objective,
        best_bound: solution.best_bound,
        nodes: solution.nodes,
        costs: total,
        scenarios,
        table,
        values,
    })
}

fn table_rows(scenarios: &[ScenarioOutcome], total: &CostComponents) -> Vec<TableRow> {
    // scenario-weighted sums of a per-resource quantity
    let sum = |kind: ResourceKind, f: &dyn Fn(&ResourceOutcome, usize) -> f64| -> f64 {
        scenarios
            .iter()
            .map(|s| {
                s.weight
                    * s.resources
                        .iter()
                        .filter(|r| r.kind == kind)
                        .map(|r| f(r, s.hours.len()))
                        .sum::<f64>()
            })
            .sum()
    };
    let hourly_mean = |v: &[f64], n: usize| if n == 0 { 0.0 } else { v.iter().sum::<f64>() / n as f64 };
    let values = [
        sum(ResourceKind::Esr, &|r, _| r.energy_mwh),
        sum(ResourceKind::Ev, &|r, _| r.energy_mwh),
        sum(ResourceKind::Dg, &|r, n| hourly_mean(&r.power, n)),
        sum(ResourceKind::Dg, &|r, n| hourly_mean(&r.reserve, n)),
        sum(ResourceKind::Esr, &|r, _| r.reserve.first().copied().unwrap_or(0.0)),
        sum(ResourceKind::Dg, &|r, _| r.schedule_cost),
        sum(ResourceKind::Dg, &|r, _| r.reserve_cost),
        sum(ResourceKind::Esr, &|r, _| r.reserve_cost),
        sum(ResourceKind::Esr, &|r, _| r.schedule_cost),
        sum(ResourceKind::Ev, &|r, _| r.schedule_cost),
        sum(ResourceKind::Dg, &|r, _| r.transport_cost),
        sum(ResourceKind::Esr, &|r, _| r.transport_cost),
        sum(ResourceKind::Ev, &|r, _| r.transport_cost),
        total.social_welfare,
    ];
    TABLE_LABELS
        .iter()
        .zip(values)
        .map(|(l, v)| TableRow {
            quantity: l.to_string(),
            value: v,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::DegradationModel;
    use crate::network::parse_matpower_case;
    use eventmarket_milp::{solve_lp, solve_milp, Limits};

    const CASE: &str = "mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1 0 135 1 1.05 0.95;
2 1 50 10 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
1 0 0 100 -100 1 100 1 100 0 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
";

    fn resource(kind: ResourceKind, cap: f64, energy: f64) -> MobileResource {
        MobileResource {
            kind,
            block_id: 1,
            energy_capacity_mwh: energy,
            power_cap_mw: cap,
            soc_min: 0.0,
            soc_max: 1.0,
            efficiency_dch: 1.0,
            degradation: DegradationModel::default(),
            origin_xy_miles: (0.0, 0.0),
            deployment_bus: 2,
            transport_rate: 0.0,
            initial_soc: None,
            dg_price: None,
            distance_miles: 0.0,
        }
    }

    fn case_with(fleet: Vec<MobileResource>) -> NetworkCase {
        let mut c = parse_matpower_case(CASE).unwrap();
        c.fleet = fleet;
        c
    }

    fn scenario(id: usize, demand: &[f64], price: f64, window: (usize, usize), weight: f64) -> OutageScenario {
        OutageScenario {
            scenario_id: id,
            failed_branches: vec![],
            failed_generators: vec![],
            areas: vec![1],
            outage_demand: vec![demand.to_vec()],
            outage_price: vec![vec![price; demand.len()]],
            duration_window: window,
            weight,
            cluster_size: 1,
        }
    }

    fn dg_offer(q: f64, price: f64) -> GeneratorOffer {
        GeneratorOffer {
            block_id: 1,
            quantity: q,
            price,
            reserve_quantity: 0.0,
            reserve_price: 0.0,
            startup_price: 0.0,
            shutdown_price: 0.0,
        }
    }

    fn store_offer(reserve_fraction: f64) -> StorageOffer {
        StorageOffer {
            block_id: 1,
            capacity_fraction: 0.8,
            dch_fraction: 1.0,
            energy_price: 120.0,
            reserve_fraction,
            reserve_price: 24.0,
        }
    }

    fn params(lf: f64, r: f64, horizon: usize) -> MarketParams {
        MarketParams {
            reserve_factor: r,
            horizon_hours: horizon,
            loss_fraction: lf,
            voll: 1000.0,
            reserve_mode: ReserveMode::AsPrinted,
        }
    }

    fn clear(case: &NetworkCase, scen: &[OutageScenario], book: &OfferBook, p: &MarketParams) -> (ClearingModel, MarketOutcome) {
        let m = build_clearing_problem(case, scen, book, p).unwrap();
        let sol = solve_milp(&m.problem, &Limits::default()).unwrap();
        let out = extract_outcome(&m, &sol).unwrap();
        (m, out)
    }

    /// Best welfare of one DG over all commitment patterns of the window.
    fn dg_oracle(demand: &[f64], voll: f64, o: &GeneratorOffer, r: &MobileResource) -> f64 {
        let n = demand.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let on: Vec<bool> = (0..n).map(|h| mask >> h & 1 == 1).collect();
            let mut j = 0.0;
            let mut prev = false;
            for h in 0..n {
                if on[h] {
                    j += (voll - o.price) * demand[h].min(o.quantity);
                }
                if on[h] && !prev {
                    j -= o.startup_price;
                }
                if !on[h] && prev {
                    j -= o.shutdown_price;
                }
                prev = on[h];
            }
            if mask != 0 {
                j -= r.transport_rate * r.distance_miles * o.quantity;
            }
            best = best.max(j);
        }
        best
    }

    #[test]
    fn single_generator_hand_example() {
        let dg = resource(ResourceKind::Dg, 50.0, 0.0);
        let o = dg_offer(50.0, 100.0);
        let case = case_with(vec![dg.clone()]);
        let book = OfferBook {
            generator_offers: vec![o.clone()],
            ..Default::default()
        };
        let s = scenario(0, &[0.0, 30.0, 30.0, 30.0], 200.0, (2, 4), 1.0);
        let (_, out) = clear(&case, &[s], &book, &params(0.0, 0.0, 4));
        assert!((out.objective - 9000.0).abs() < 1e-6);
        assert!((out.objective - dg_oracle(&[30.0; 3], 200.0, &o, &dg)).abs() < 1e-6);
        assert!((out.costs.outage_value - 18000.0).abs() < 1e-6);
        assert!((out.costs.schedule_cost - 9000.0).abs() < 1e-6);
        assert!((out.costs.social_welfare - out.objective).abs() < 1e-6);
        assert_eq!(out.scenarios[0].resources[0].power, vec![30.0; 3]);
        assert!((out.table_value("DG Sched. cost ($)").unwrap() - 9000.0).abs() < 1e-6);
        assert!((out.table_value("Avg. DG cleared (MW)").unwrap() - 30.0).abs() < 1e-6);
    }

    #[test]
    fn commitment_charges_and_transport_match_enumeration() {
        let mut dg = resource(ResourceKind::Dg, 50.0, 0.0);
        dg.transport_rate = 3.0;
        dg.distance_miles = 10.0;
        let demand = [30.0, 0.0, 30.0, 40.0];
        for (startup, shutdown) in [(0.0, 0.0), (500.0, 0.0), (500.0, 700.0), (2500.0, 100.0), (20_000.0, 0.0)] {
            let mut o = dg_offer(35.0, 100.0);
            o.startup_price = startup;
            o.shutdown_price = shutdown;
            let case = case_with(vec![dg.clone()]);
            let book = OfferBook {
                generator_offers: vec![o.clone()],
                ..Default::default()
            };
            let s = scenario(0, &demand, 200.0, (1, 4), 1.0);
            let (_, out) = clear(&case, &[s], &book, &params(0.0, 0.0, 4));
            let want = dg_oracle(&demand, 200.0, &o, &dg);
            assert!((out.objective - want).abs() < 1e-6, "start {startup} stop {shutdown}: {} vs {want}", out.objective);
            assert!((out.costs.social_welfare - want).abs() < 1e-6);
        }
    }

    /// Grid search over discharge levels and every on/cleared pattern.
    fn storage_oracle(demand: &[f64], voll: f64, lf: f64, r: &MobileResource, o: &StorageOffer) -> f64 {
        let step = 0.005;
        let levels: Vec<f64> = (0..=(r.power_cap_mw / step).round() as usize).map(|i| i as f64 * step).collect();
        let d = r.degradation;
        let e = r.energy_capacity_mwh;
        let s0 = r.start_soc();
        let move_cost = r.transport_rate * r.distance_miles * o.capacity_fraction * r.soc_max * e;
        let mut best = 0.0f64;
        for &p1 in &levels {
            for &p2 in &levels {
                let p = [p1, p2];
                let mut j = -move_cost;
                let mut soc_prev = s0;
                let mut ok = true;
                for h in 0..2 {
                    let x = if p[h] > 0.0 { 1.0 } else { 0.0 };
                    if x == 1.0 && p[h] < MIN_DISCHARGE_SHARE * r.power_cap_mw - 1e-12 {
                        ok = false;
                    }
                    let served = p[h] / (1.0 + lf);
                    let soc = soc_prev - p[h] / (r.efficiency_dch * e);
                    if served > demand[h] + 1e-12 || soc < r.soc_min - 1e-12 || s0 - soc > o.capacity_fraction * r.soc_max + 1e-12 {
                        ok = false;
                    }
                    j += voll * served - (d.alpha * x * soc + d.beta * x * soc_prev + d.gamma * p[h] + d.psi * x);
                    soc_prev = soc;
                }
                if ok {
                    best = best.max(j);
                }
            }
        }
        best
    }

    #[test]
    fn storage_matches_grid_oracle() {
        let mut esr = resource(ResourceKind::Esr, 2.0, 1.5);
        esr.degradation = DegradationModel {
            alpha: -36.23,
            beta: 34.8,
            gamma: 2.77,
            psi: -2.45,
        };
        esr.soc_min = 0.1;
        esr.efficiency_dch = 0.95;
        esr.transport_rate = 3.0;
        esr.distance_miles = 1.0;
        let o = store_offer(0.0);
        let case = case_with(vec![esr.clone()]);
        let book = OfferBook {
            esr_offers: vec![o.clone()],
            ..Default::default()
        };
        for (demand, price) in [([1.5, 1.0], 200.0), ([0.3, 2.0], 150.0), ([0.0, 0.5], 40.0), ([0.0, 0.0], 200.0)] {
            let s = scenario(0, &demand, price, (1, 2), 1.0);
            let (_, out) = clear(&case, &[s], &book, &params(0.03, 0.1, 2));
            let want = storage_oracle(&demand, price, 0.03, &esr, &o);
            assert!((out.objective - want).abs() < 1e-6, "{demand:?}: {} vs {want}", out.objective);
            assert!((out.costs.social_welfare - want).abs() < 1e-6);
        }
    }

    #[test]
    fn scenario_blocks_add_up_by_weight() {
        let dg = resource(ResourceKind::Dg, 50.0, 0.0);
        let case = case_with(vec![dg]);
        let book = OfferBook {
            generator_offers: vec![dg_offer(50.0, 100.0)],
            ..Default::default()
        };
        let a = scenario(3, &[30.0, 30.0], 200.0, (1, 2), 0.25);
        let b = scenario(7, &[10.0, 60.0], 200.0, (1, 2), 0.75);
        let (_, out) = clear(&case, &[a, b], &book, &params(0.0, 0.0, 2));
        let want = 0.25 * 6000.0 + 0.75 * (1000.0 + 5000.0);
        assert!((out.objective - want).abs() < 1e-6);
        assert_eq!(out.scenarios[1].scenario_id, 7);
        assert!((out.scenarios[1].costs.social_welfare - 6000.0).abs() < 1e-6);
    }

    #[test]
    fn empty_book_clears_nothing() {
        let case = case_with(vec![]);
        let s = scenario(0, &[30.0, 30.0], 200.0, (1, 2), 1.0);
        let (_, out) = clear(&case, &[s], &OfferBook::default(), &params(0.03, 0.1, 2));
        assert_eq!(out.objective, 0.0);
        assert_eq!(out.costs, CostComponents::default());
        assert!(out.table.iter().all(|r| r.value == 0.0));
    }

    #[test]
    fn binary_count_follows_the_layout() {
        let mut ev = resource(ResourceKind::Ev, 1.0, 4.0);
        ev.soc_min = 0.2;
        let case = case_with(vec![resource(ResourceKind::Dg, 5.0, 0.0), resource(ResourceKind::Esr, 1.0, 8.0), ev]);
        let book = OfferBook {
            generator_offers: vec![dg_offer(5.0, 100.0)],
            esr_offers: vec![store_offer(0.2)],
            ev_offers: vec![store_offer(0.0)],
        };
        let scen: Vec<_> = (0..3).map(|i| scenario(i, &[1.0; 6], 200.0, (2, 5), 1.0 / 3.0)).collect();
        let m = build_clearing_problem(&case, &scen, &book, &params(0.03, 0.1, 6)).unwrap();
        let (s, h, g, b, v) = (3, 4, 1, 1, 1);
        let want = s * h * 2 * g + s * h * (b + v) + s * (b + v) + s * h + 2 * s * h * g;
        let rep = m.report();
        assert_eq!(rep.binaries, want);
        assert_eq!(rep.rows_by_tag["eq6"], s * h);
        assert_eq!(rep.rows_by_tag["eq7"], s * h);
        assert!(m.problem.var_by_name("socrs_ESR1_s1").is_some());
        assert!(m.problem.var_by_name("socrs_EV1_s1").is_none());
        assert!(m.problem.constraints.iter().any(|c| c.name == "eq6_balance_t3_s2"));
    }

    #[test]
    fn ev_reserve_offers_are_rejected() {
        let case = case_with(vec![resource(ResourceKind::Ev, 1.0, 4.0)]);
        let book = OfferBook {
            ev_offers: vec![store_offer(0.1)],
            ..Default::default()
        };
        let s = scenario(0, &[1.0], 200.0, (1, 1), 1.0);
        let err = build_clearing_problem(&case, &[s], &book, &params(0.0, 0.1, 1)).unwrap_err();
        assert!(err.to_string().contains("spinning reserve"));
    }

    #[test]
    fn bad_inputs_are_arguments_errors() {
        let case = case_with(vec![resource(ResourceKind::Dg, 5.0, 0.0)]);
        let book = OfferBook {
            generator_offers: vec![dg_offer(5.0, 100.0)],
            ..Default::default()
        };
        let p = params(0.0, 0.1, 2);
        assert!(build_clearing_problem(&case, &[], &book, &p).is_err());
        let half = scenario(0, &[1.0, 1.0], 200.0, (1, 2), 0.5);
        assert!(build_clearing_problem(&case, &[half], &book, &p).is_err());
        let late = scenario(0, &[1.0, 1.0], 200.0, (2, 3), 1.0);
        assert!(build_clearing_problem(&case, &[late], &book, &p).is_err());
        let mut other = book.clone();
        other.generator_offers[0].block_id = 9;
        let s = scenario(0, &[1.0, 1.0], 200.0, (1, 2), 1.0);
        let err = build_clearing_problem(&case, &[s], &other, &p).unwrap_err();
        assert!(err.to_string().contains("DG9"));
    }

    #[test]
    fn strict_reserve_buys_headroom() {
        let dg = resource(ResourceKind::Dg, 50.0, 0.0);
        let mut o = dg_offer(50.0, 100.0);
        o.reserve_quantity = 10.0;
        o.reserve_price = 20.0;
        let case = case_with(vec![dg]);
        let book = OfferBook {
            generator_offers: vec![o],
            ..Default::default()
        };
        let s = scenario(0, &[30.0; 3], 200.0, (1, 3), 1.0);
        let mut p = params(0.0, 0.1, 3);
        let (_, loose) = clear(&case, &[s.clone()], &book, &p);
        assert!((loose.objective - 9000.0).abs() < 1e-6);
        p.reserve_mode = ReserveMode::Strict;
        let (_, strict) = clear(&case, &[s], &book, &p);
        // 30 MW served needs 3 MW of reserve at $20 each hour
        assert!((strict.objective - 3.0 * (3000.0 - 60.0)).abs() < 1e-6);
        assert!((strict.costs.reserve_cost - 180.0).abs() < 1e-6);
        for &r in &strict.scenarios[0].resources[0].reserve {
            assert!((r - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn relaxation_is_tight_without_commitment_charges() {
        let case = case_with(vec![resource(ResourceKind::Dg, 50.0, 0.0)]);
        let book = OfferBook {
            generator_offers: vec![dg_offer(50.0, 100.0)],
            ..Default::default()
        };
        let s = scenario(0, &[30.0; 3], 200.0, (1, 3), 1.0);
        let m = build_clearing_problem(&case, &[s], &book, &params(0.0, 0.0, 3)).unwrap();
        let lp = solve_lp(&m.problem).unwrap();
        assert!((lp.objective - 9000.0).abs() < 1e-6);
    }

    #[test]
    fn tag_is_the_first_name_part() {
        assert_eq!(row_tag("eq6_balance_t3_s2"), "eq6");
        assert_eq!(row_tag("plain"), "plain");
    }
}

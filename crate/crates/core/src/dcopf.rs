//! DC optimal power flow with load shedding, solved as an LP.
//!
//! Angles are in radians and flows in MW (`base_mva / x` per radian). Each
//! island gets its own angle reference; an island without generation can
//! only balance by shedding all of its load.

use eventmarket_milp::{solve_milp, Limits, MilpProblem, Relation, Sense, SolveStatus, VarId};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::network::{islands, NetworkCase};

/// Which components are in service for a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Availability {
    pub branch_up: Vec<bool>,
    pub gen_up: Vec<bool>,
}

impl Availability {
    pub fn intact(case: &NetworkCase) -> Self {
        Availability {
            branch_up: case.branches.iter().map(|b| b.in_service).collect(),
            gen_up: case.generators.iter().map(|g| g.in_service).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcOpfOptions {
    /// $/MWh charged on shed load.
    pub voll: f64,
    /// Losses as a fraction of served demand.
    pub loss_fraction: f64,
}

impl Default for DcOpfOptions {
    fn default() -> Self {
        DcOpfOptions {
            voll: 1000.0,
            loss_fraction: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcOpfResult {
    /// MW per case generator (fleet generators report their injection).
    pub dispatch: Vec<f64>,
    /// MW per fleet resource.
    pub fleet_dispatch: Vec<f64>,
    pub angles: Vec<f64>,
    pub flows: Vec<f64>,
    pub shed: Vec<f64>,
    /// Served load per bus, MW (before the loss gross-up).
    pub served: Vec<f64>,
    pub cost: f64,
    pub losses: f64,
}

impl DcOpfResult {
    pub fn total_shed(&self) -> f64 {
        self.shed.iter().sum()
    }

    pub fn total_served(&self) -> f64 {
        self.served.iter().sum()
    }

    pub fn total_dispatch(&self) -> f64 {
        self.dispatch.iter().sum::<f64>() + self.fleet_dispatch.iter().sum::<f64>()
    }
}

/// Solve one hour. `load_scale` multiplies each bus load; `fleet_capacity`
/// gives per fleet resource the MW it may inject at zero cost (fleet
/// generators are otherwise left out).
pub fn dc_opf(
    case: &NetworkCase,
    availability: &Availability,
    load_scale: &[f64],
    fleet_capacity: &[f64],
    options: &DcOpfOptions,
) -> Result<DcOpfResult> {
    let nb = case.buses.len();
    if availability.branch_up.len() != case.branches.len() || availability.gen_up.len() != case.generators.len() {
        return Err(CoreError::Argument("availability does not match the case".into()));
    }
    if load_scale.len() != nb {
        return Err(CoreError::Argument("load_scale needs one entry per bus".into()));
    }
    let idx = case.bus_index();
    let island = islands(case, &availability.branch_up);
    let base = case.base_mva;
    let lf = options.loss_fraction;

    let mut p = MilpProblem::new("dc_opf", Sense::Minimize);
    let mut theta = Vec::with_capacity(nb);
    let mut ref_taken = vec![false; nb];
    for (i, b) in case.buses.iter().enumerate() {
        let is_ref = match island[i] {
            Some(k) if !ref_taken[k] => {
                ref_taken[k] = true;
                true
            }
            Some(_) => false,
            None => true,
        };
        let (lo, hi) = if is_ref { (0.0, 0.0) } else { (f64::NEG_INFINITY, f64::INFINITY) };
        theta.push(p.add_var(format!("theta_{}", b.id), lo, hi, 0.0));
    }

    // per bus: (var, +1 for injection / -1 for withdrawal)
    let mut bus_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); nb];
    let mut gen_vars: Vec<Option<VarId>> = vec![None; case.generators.len()];
    for (k, g) in case.generators.iter().enumerate() {
        let cap = match g.fleet_index {
            Some(f) => fleet_capacity.get(f).copied().unwrap_or(0.0),
            None => g.p_max,
        };
        if !availability.gen_up[k] || cap <= 0.0 {
            continue;
        }
        let b = idx[&g.bus];
        if island[b].is_none() {
            continue;
        }
        let lo = if g.fleet_index.is_some() { 0.0 } else { g.p_min };
        let v = p.add_var(format!("pg_{}", k + 1), lo, cap, 0.0);
        bus_terms[b].push((v, 1.0));
        gen_vars[k] = Some(v);
        if g.fleet_index.is_none() {
            // epigraph of the convex cost curve
            let c = p.add_var(format!("cost_{}", k + 1), f64::NEG_INFINITY, f64::INFINITY, 1.0);
            let mut at = g.cost_curve.points.first().map_or(0.0, |q| q.1);
            for (s, seg) in g.cost_curve.segments().iter().enumerate() {
                // c >= at + price (P - start)
                p.add_constraint(
                    format!("costseg_{}_{}", k + 1, s + 1),
                    vec![(c, 1.0), (v, -seg.price)],
                    Relation::Ge,
                    at - seg.price * seg.start_mw,
                );
                at += seg.price * (seg.end_mw - seg.start_mw);
            }
            if g.cost_curve.points.len() < 2 {
                p.add_constraint(format!("costseg_{}_0", k + 1), vec![(c, 1.0)], Relation::Ge, at);
            }
        }
    }
    // fleet storage has no generator row; inject at the deployment bus
    let mut fleet_vars: Vec<Option<VarId>> = vec![None; case.fleet.len()];
    for (f, r) in case.fleet.iter().enumerate() {
        let cap = fleet_capacity.get(f).copied().unwrap_or(0.0);
        if !r.kind.is_storage() || cap <= 0.0 {
            continue;
        }
        let b = idx[&r.deployment_bus];
        if island[b].is_none() {
            continue;
        }
        let v = p.add_var(format!("fleet_{}", r.label()), 0.0, cap, 0.0);
        bus_terms[b].push((v, 1.0));
        fleet_vars[f] = Some(v);
    }

    let mut loads = vec![0.0; nb];
    let mut shed_vars = Vec::with_capacity(nb);
    for (i, b) in case.buses.iter().enumerate() {
        let load = (b.load_p * load_scale[i]).max(0.0);
        loads[i] = load;
        let v = p.add_var(format!("shed_{}", b.id), 0.0, load, options.voll);
        // balance: injections - outflow = (load - shed) (1 + lf)
        bus_terms[i].push((v, 1.0 + lf));
        shed_vars.push(v);
    }

    let mut flow_vars: Vec<Option<VarId>> = vec![None; case.branches.len()];
    for (k, br) in case.branches.iter().enumerate() {
        if !availability.branch_up[k] {
            continue;
        }
        let (f, t) = (idx[&br.from_bus], idx[&br.to_bus]);
        let lim = br.flow_limit;
        let v = p.add_var(format!("flow_{}", k + 1), -lim, lim, 0.0);
        let y = base / (br.reactance * br.ratio());
        let shift = br.shift_deg.to_radians();
        // flow = y (theta_f - theta_t - shift)
        p.add_constraint(
            format!("dcflow_{}", k + 1),
            vec![(v, 1.0), (theta[f], -y), (theta[t], y)],
            Relation::Eq,
            -y * shift,
        );
        bus_terms[f].push((v, -1.0));
        bus_terms[t].push((v, 1.0));
        flow_vars[k] = Some(v);
    }
    for (i, b) in case.buses.iter().enumerate() {
        let terms = std::mem::take(&mut bus_terms[i]);
        p.add_constraint(format!("balance_{}", b.id), terms, Relation::Eq, loads[i] * (1.0 + lf));
    }

    let sol = solve_milp(&p, &Limits::default())?;
    if sol.status != SolveStatus::Optimal {
        return Err(CoreError::Numerical(format!("DC OPF ended with status {}", sol.status.as_str())));
    }
    let val = |v: Option<VarId>| v.map_or(0.0, |v| sol.value(v));
    let dispatch: Vec<f64> = gen_vars.iter().map(|&v| val(v)).collect();
    let mut fleet_dispatch: Vec<f64> = fleet_vars.iter().map(|&v| val(v)).collect();
    for (k, g) in case.generators.iter().enumerate() {
        if let Some(f) = g.fleet_index {
            fleet_dispatch[f] = dispatch[k];
        }
    }
    let shed: Vec<f64> = shed_vars.iter().map(|&v| sol.value(v)).collect();
    let served: Vec<f64> = loads.iter().zip(&shed).map(|(l, s)| l - s).collect();
    let losses = lf * served.iter().sum::<f64>();
    Ok(DcOpfResult {
        fleet_dispatch,
        angles: theta.iter().map(|&v| sol.value(v)).collect(),
        flows: flow_vars.iter().map(|&v| val(v)).collect(),
        shed,
        served,
        cost: sol.objective,
        losses,
        dispatch,
    })
}

/// One row per branch: `branch,from_bus,to_bus,flow_mw,limit_mw`.
pub fn flows_csv(case: &NetworkCase, result: &DcOpfResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["branch", "from_bus", "to_bus", "flow_mw", "limit_mw"])?;
    for (k, br) in case.branches.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            br.from_bus.to_string(),
            br.to_bus.to_string(),
            format!("{:.6}", result.flows[k]),
            if br.flow_limit.is_finite() { format!("{}", br.flow_limit) } else { "inf".into() },
        ])?;
    }
    crate::finish_csv(w)
}

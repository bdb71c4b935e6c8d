//! Mobile resources (DG, ESR, EV) and their placement on a case.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::network::{CostCurve, Generator, NetworkCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    #[serde(rename = "DG")]
    Dg,
    #[serde(rename = "ESR")]
    Esr,
    #[serde(rename = "EV")]
    Ev,
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResourceKind::Dg => "DG",
            ResourceKind::Esr => "ESR",
            ResourceKind::Ev => "EV",
        })
    }
}

impl ResourceKind {
    pub fn is_storage(self) -> bool {
        self != ResourceKind::Dg
    }
}

/// Coefficients of the storage scheduling cost, $ per unit of each term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DegradationModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub psi: f64,
}

impl DegradationModel {
    /// One block-hour of scheduling cost: `soc_now`/`soc_prev` are the
    /// discharge-gated SoC levels (p.u.), `power` in MW, `on` the discharging flag.
    pub fn hourly_cost(&self, soc_now: f64, soc_prev: f64, power: f64, on: f64) -> f64 {
        self.alpha * soc_now + self.beta * soc_prev + self.gamma * power + self.psi * on
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileResource {
    pub kind: ResourceKind,
    pub block_id: usize,
    #[serde(default)]
    pub energy_capacity_mwh: f64,
    pub power_cap_mw: f64,
    #[serde(default)]
    pub soc_min: f64,
    #[serde(default = "one")]
    pub soc_max: f64,
    #[serde(default = "one")]
    pub efficiency_dch: f64,
    #[serde(default)]
    pub degradation: DegradationModel,
    pub origin_xy_miles: (f64, f64),
    pub deployment_bus: usize,
    /// $/MWh/mile
    pub transport_rate: f64,
    /// SoC when the event starts; `soc_max` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_soc: Option<f64>,
    /// DG energy price used for the generator cost curve added to the case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dg_price: Option<f64>,
    /// Origin to deployment bus, miles; filled in by [`attach_fleet`].
    #[serde(default)]
    pub distance_miles: f64,
}

impl MobileResource {
    pub fn label(&self) -> String {
        format!("{}{}", self.kind, self.block_id)
    }

    pub fn start_soc(&self) -> f64 {
        self.initial_soc.unwrap_or(self.soc_max)
    }

    /// Invariant violations, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let l = self.label();
        if !(self.power_cap_mw > 0.0) {
            out.push(format!("{l}: power_cap_mw must be positive"));
        }
        if self.kind.is_storage() {
            if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
                out.push(format!("{l}: need 0 <= soc_min < soc_max <= 1"));
            }
            if !(self.efficiency_dch > 0.0 && self.efficiency_dch <= 1.0) {
                out.push(format!("{l}: efficiency_dch must lie in (0, 1]"));
            }
            if !(self.energy_capacity_mwh > 0.0) {
                out.push(format!("{l}: energy_capacity_mwh must be positive"));
            }
            if let Some(s) = self.initial_soc {
                if s < self.soc_min || s > self.soc_max {
                    out.push(format!("{l}: initial_soc outside [soc_min, soc_max]"));
                }
            }
        }
        let d = &self.degradation;
        if ![d.alpha, d.beta, d.gamma, d.psi].iter().all(|v| v.is_finite()) {
            out.push(format!("{l}: degradation coefficients must be finite"));
        }
        if self.transport_rate < 0.0 {
            out.push(format!("{l}: transport_rate must be non-negative"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FleetConfig {
    /// Overrides for the default grid layout, keyed by bus id.
    #[serde(default)]
    pub bus_coordinates: BTreeMap<usize, (f64, f64)>,
    #[serde(default)]
    pub resources: Vec<MobileResource>,
}

impl FleetConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn round_hundredth(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Place the fleet on the case. DGs also become generators at their
/// deployment bus. Any previously attached fleet is replaced.
pub fn attach_fleet(case: &NetworkCase, config: &FleetConfig) -> Result<NetworkCase> {
    let idx = case.bus_index();
    let unknown: Vec<String> = config
        .resources
        .iter()
        .filter(|r| !idx.contains_key(&r.deployment_bus))
        .map(|r| format!("{} (bus {})", r.label(), r.deployment_bus))
        .collect();
    if !unknown.is_empty() {
        return Err(CoreError::Validation(format!("unknown deployment bus for {}", unknown.join(", "))));
    }
    let mut seen = BTreeSet::new();
    for r in &config.resources {
        if !seen.insert((r.kind, r.block_id)) {
            return Err(CoreError::Validation(format!("{} listed twice", r.label())));
        }
        if let Some(msg) = r.problems().into_iter().next() {
            return Err(CoreError::Validation(msg));
        }
    }
    for id in config.bus_coordinates.keys() {
        if !idx.contains_key(id) {
            return Err(CoreError::Validation(format!("coordinates given for unknown bus {id}")));
        }
    }

    let mut out = case.clone();
    out.generators.retain(|g| g.fleet_index.is_none());
    out.fleet.clear();
    for (id, xy) in &config.bus_coordinates {
        out.buses[idx[id]].coords = *xy;
    }
    for r in &config.resources {
        let mut r = r.clone();
        let (bx, by) = out.buses[idx[&r.deployment_bus]].coords;
        let (ox, oy) = r.origin_xy_miles;
        r.distance_miles = round_hundredth(((bx - ox).powi(2) + (by - oy).powi(2)).sqrt());
        let k = out.fleet.len();
        if r.kind == ResourceKind::Dg {
            let price = r.dg_price.unwrap_or(0.0);
            let cap = r.power_cap_mw;
            let half = 0.5 * cap;
            let curve = CostCurve {
                points: vec![(0.0, 0.0), (half, price * half), (cap, price * half + 1.1 * price * half)],
            };
            out.generators.push(Generator {
                bus: r.deployment_bus,
                pg: 0.0,
                qg: 0.0,
                q_max: 0.0,
                q_min: 0.0,
                vg: 1.0,
                mbase: out.base_mva,
                in_service: true,
                p_max: cap,
                p_min: 0.0,
                extra: vec![0.0; 11],
                cost_curve: curve,
                gencost_raw: None,
                is_slack: false,
                fleet_index: Some(k),
            });
        }
        out.fleet.push(r);
    }
    out.mark_slack();
    Ok(out)
}

/// Transport cost: rate ($/MWh/mile) x distance (miles) x cleared capacity.
pub fn transport_cost(resource: &MobileResource, cleared_capacity: f64) -> f64 {
    resource.transport_rate * resource.distance_miles * cleared_capacity
}

//! The shipped 30-bus study: case, fleet, offers and the two hazard
//! configs, embedded so the binary runs without a data directory.

use crate::error::{CoreError, Result};
use crate::fleet::{attach_fleet, FleetConfig};
use crate::market::MarketParams;
use crate::network::{parse_matpower_case, validate_case, NetworkCase, Severity};
use crate::offers::OfferConfig;
use crate::scenario::HazardConfig;
use crate::simulation::{PhasePlan, StudyInputs};

pub const CASE30: &str = include_str!("../data/case30.m");
pub const FLEET: &str = include_str!("../data/fleet.json");
pub const OFFERS: &str = include_str!("../data/offers.json");
pub const HAZARD_6_12: &str = include_str!("../data/hazard_6_12.json");
pub const HAZARD_6_9: &str = include_str!("../data/hazard_6_9.json");

pub const HORIZON_HOURS: usize = 12;

/// Parse a case, reject error diagnostics and attach the fleet.
pub fn prepare_case(case_text: &str, fleet_json: &str) -> Result<NetworkCase> {
    let case = parse_matpower_case(case_text)?;
    if let Some(d) = validate_case(&case).into_iter().find(|d| d.severity == Severity::Error) {
        return Err(CoreError::Validation(d.to_string()));
    }
    attach_fleet(&case, &FleetConfig::from_json(fleet_json)?)
}

/// Inputs from config texts. The plan takes its window from the hazard.
pub fn assemble(case_text: &str, fleet_json: &str, hazard_json: &str, offers_json: &str, params: MarketParams) -> Result<StudyInputs> {
    let case = prepare_case(case_text, fleet_json)?;
    let hazard = HazardConfig::from_json(hazard_json)?;
    let offers = OfferConfig::from_json(offers_json)?;
    let plan = PhasePlan::new(params.horizon_hours, hazard.window());
    hazard.validate(plan.horizon_hours)?;
    plan.validate()?;
    Ok(StudyInputs {
        case,
        hazard,
        offers,
        params,
        plan,
    })
}

/// The default study for an event ending after hour 12 or hour 9.
pub fn inputs(event_end: usize) -> Result<StudyInputs> {
    let hazard = match event_end {
        12 => HAZARD_6_12,
        9 => HAZARD_6_9,
        _ => return Err(CoreError::Argument(format!("no shipped hazard config ends at hour {event_end}"))),
    };
    assemble(CASE30, FLEET, hazard, OFFERS, MarketParams::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_data_loads() {
        let a = inputs(12).unwrap();
        assert_eq!(a.case.buses.len(), 30);
        assert_eq!(a.case.fleet.len(), 5);
        assert_eq!(a.plan.event_window, (6, 12));
        assert_eq!(inputs(9).unwrap().plan.event_window, (6, 9));
        assert!(inputs(10).is_err());
    }
}

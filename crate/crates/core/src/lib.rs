//! Resilience event-market clearing for mobile grid resources.
//!
//! The pipeline: parse a MATPOWER case, attach the mobile fleet, sample and
//! reduce outage scenarios, clear the event market as a MILP, then replay the
//! cleared resources on the network (DC OPF plus AC power flow).

pub mod acpf;
pub mod benchmark;
pub mod dcopf;
pub mod error;
pub mod fleet;
pub mod market;
pub mod network;
pub mod offers;
pub mod scenario;
pub mod simulation;

pub use error::{CoreError, Result};

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| CoreError::Csv(e.into_error().into()))?;
    String::from_utf8(bytes).map_err(|e| CoreError::Contract(format!("csv output is not UTF-8: {e}")))
}

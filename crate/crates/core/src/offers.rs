//! Offers submitted by fleet resources. One offer per fleet block; a
//! resource that wants several price blocks is listed as several blocks.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fleet::{MobileResource, ResourceKind};
use crate::network::{Diagnostic, Severity};

pub const EV_RESERVE_RULE: &str = "EVs do not participate in the spinning reserve market";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOffer {
    pub block_id: usize,
    /// MW
    pub quantity: f64,
    /// $/MWh
    pub price: f64,
    /// MW
    pub reserve_quantity: f64,
    /// $/MWh
    pub reserve_price: f64,
    #[serde(default)]
    pub startup_price: f64,
    #[serde(default)]
    pub shutdown_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageOffer {
    pub block_id: usize,
    pub capacity_fraction: f64,
    pub dch_fraction: f64,
    /// $/MWh
    pub energy_price: f64,
    #[serde(default)]
    pub reserve_fraction: f64,
    /// $/MWh
    #[serde(default)]
    pub reserve_price: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OfferBook {
    pub generator_offers: Vec<GeneratorOffer>,
    pub esr_offers: Vec<StorageOffer>,
    pub ev_offers: Vec<StorageOffer>,
}

impl OfferBook {
    pub fn is_empty(&self) -> bool {
        self.generator_offers.is_empty() && self.esr_offers.is_empty() && self.ev_offers.is_empty()
    }

    pub fn storage_offers(&self, kind: ResourceKind) -> &[StorageOffer] {
        match kind {
            ResourceKind::Esr => &self.esr_offers,
            ResourceKind::Ev => &self.ev_offers,
            ResourceKind::Dg => &[],
        }
    }
}

/// Values used for fleet members the config does not mention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfferDefaults {
    /// $/MWh before the kind multiplier.
    pub base_price: f64,
    pub dg_multiplier: f64,
    pub esr_multiplier: f64,
    pub ev_multiplier: f64,
    /// DG reserve quantity as a share of its power cap.
    pub dg_reserve_share: f64,
    /// Reserve price as a share of the energy price.
    pub reserve_price_ratio: f64,
    pub capacity_fraction: f64,
    pub dch_fraction: f64,
    /// ESR only; EVs always get 0.
    pub reserve_fraction: f64,
}

impl Default for OfferDefaults {
    fn default() -> Self {
        OfferDefaults {
            base_price: 100.0,
            dg_multiplier: 1.0,
            esr_multiplier: 1.2,
            ev_multiplier: 1.1,
            dg_reserve_share: 0.25,
            reserve_price_ratio: 0.2,
            capacity_fraction: 0.8,
            dch_fraction: 1.0,
            reserve_fraction: 0.2,
        }
    }
}

impl OfferDefaults {
    fn price(&self, kind: ResourceKind) -> f64 {
        self.base_price
            * match kind {
                ResourceKind::Dg => self.dg_multiplier,
                ResourceKind::Esr => self.esr_multiplier,
                ResourceKind::Ev => self.ev_multiplier,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OfferConfig {
    #[serde(default)]
    pub defaults: OfferDefaults,
    #[serde(default)]
    pub generators: Vec<GeneratorOffer>,
    #[serde(default)]
    pub esr: Vec<StorageOffer>,
    #[serde(default)]
    pub ev: Vec<StorageOffer>,
}

impl OfferConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn find(fleet: &[MobileResource], kind: ResourceKind, block: usize) -> Option<&MobileResource> {
    fleet.iter().find(|r| r.kind == kind && r.block_id == block)
}

/// Explicit offers from the config, defaults for the rest of the fleet.
/// Offers are ordered by block id within each kind.
pub fn build_offer_book(fleet: &[MobileResource], config: &OfferConfig) -> Result<OfferBook> {
    for o in &config.generators {
        if find(fleet, ResourceKind::Dg, o.block_id).is_none() {
            return Err(CoreError::Validation(format!("offer for unknown resource DG{}", o.block_id)));
        }
    }
    for (kind, offers) in [(ResourceKind::Esr, &config.esr), (ResourceKind::Ev, &config.ev)] {
        for o in offers {
            if find(fleet, kind, o.block_id).is_none() {
                return Err(CoreError::Validation(format!("offer for unknown resource {kind}{}", o.block_id)));
            }
            if kind == ResourceKind::Ev && (o.reserve_fraction != 0.0 || o.reserve_price != 0.0) {
                return Err(CoreError::Validation(format!("EV{}: {EV_RESERVE_RULE}", o.block_id)));
            }
        }
    }

    let d = &config.defaults;
    let mut book = OfferBook::default();
    for r in fleet {
        match r.kind {
            ResourceKind::Dg => {
                let offer = config.generators.iter().find(|o| o.block_id == r.block_id).cloned().unwrap_or_else(|| {
                    let price = d.price(r.kind);
                    GeneratorOffer {
                        block_id: r.block_id,
                        quantity: r.power_cap_mw,
                        price,
                        reserve_quantity: d.dg_reserve_share * r.power_cap_mw,
                        reserve_price: d.reserve_price_ratio * price,
                        startup_price: 0.0,
                        shutdown_price: 0.0,
                    }
                });
                book.generator_offers.push(offer);
            }
            kind => {
                let given = if kind == ResourceKind::Esr { &config.esr } else { &config.ev };
                let offer = given.iter().find(|o| o.block_id == r.block_id).cloned().unwrap_or_else(|| {
                    let price = d.price(kind);
                    let esr = kind == ResourceKind::Esr;
                    StorageOffer {
                        block_id: r.block_id,
                        capacity_fraction: d.capacity_fraction,
                        dch_fraction: d.dch_fraction,
                        energy_price: price,
                        reserve_fraction: if esr { d.reserve_fraction } else { 0.0 },
                        reserve_price: if esr { d.reserve_price_ratio * price } else { 0.0 },
                    }
                });
                if kind == ResourceKind::Esr {
                    book.esr_offers.push(offer);
                } else {
                    book.ev_offers.push(offer);
                }
            }
        }
    }
    book.generator_offers.sort_by_key(|o| o.block_id);
    book.esr_offers.sort_by_key(|o| o.block_id);
    book.ev_offers.sort_by_key(|o| o.block_id);
    Ok(book)
}

/// One diagnostic per broken invariant; empty means the book is usable.
pub fn validate_offer_book(book: &OfferBook, fleet: &[MobileResource]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |m: String| {
        out.push(Diagnostic {
            severity: Severity::Error,
            message: m,
        })
    };
    let mut seen = BTreeSet::new();
    for o in &book.generator_offers {
        let l = format!("DG{}", o.block_id);
        if !seen.insert((ResourceKind::Dg, o.block_id)) {
            err(format!("{l}: more than one offer"));
        }
        match find(fleet, ResourceKind::Dg, o.block_id) {
            None => err(format!("{l}: no such fleet resource")),
            Some(r) if o.quantity > r.power_cap_mw + 1e-9 => {
                err(format!("{l}: quantity {} exceeds power cap {}", o.quantity, r.power_cap_mw))
            }
            Some(_) => {}
        }
        if [o.price, o.reserve_price, o.startup_price, o.shutdown_price, o.quantity, o.reserve_quantity]
            .iter()
            .any(|&v| v < 0.0 || !v.is_finite())
        {
            err(format!("{l}: negative or non-finite price or quantity"));
        }
        if o.reserve_quantity > o.quantity + 1e-9 {
            err(format!("{l}: reserve_quantity {} exceeds quantity {}", o.reserve_quantity, o.quantity));
        }
    }
    for kind in [ResourceKind::Esr, ResourceKind::Ev] {
        for o in book.storage_offers(kind) {
            let l = format!("{kind}{}", o.block_id);
            if !seen.insert((kind, o.block_id)) {
                err(format!("{l}: more than one offer"));
            }
            if find(fleet, kind, o.block_id).is_none() {
                err(format!("{l}: no such fleet resource"));
            }
            let fractions = [o.capacity_fraction, o.dch_fraction, o.reserve_fraction];
            if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                err(format!("{l}: fraction out of range"));
            } else if o.capacity_fraction + o.reserve_fraction > 1.0 + 1e-12 {
                err(format!("{l}: capacity_fraction + reserve_fraction exceeds 1"));
            }
            if o.energy_price < 0.0 || o.reserve_price < 0.0 {
                err(format!("{l}: negative price"));
            }
            if kind == ResourceKind::Ev && (o.reserve_fraction != 0.0 || o.reserve_price != 0.0) {
                err(format!("{l}: {EV_RESERVE_RULE}"));
            }
        }
    }
    out
}

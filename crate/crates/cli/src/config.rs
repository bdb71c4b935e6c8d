//! Run configuration: defaults, then a `--config` JSON file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use eventmarket_core::benchmark;
use eventmarket_core::market::{MarketParams, ReserveMode};
use eventmarket_core::simulation::{PhasePlan, StudyInputs, DEFAULT_CLUSTERS, DEFAULT_SCENARIO_COUNT};
use eventmarket_core::scenario::HazardConfig;
use eventmarket_core::offers::OfferConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Every setting a run can take. Absent fields fall back to the shipped
/// 30-bus study and its defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: Option<PathBuf>,
    pub fleet: Option<PathBuf>,
    pub hazard: Option<PathBuf>,
    pub offers: Option<PathBuf>,
    pub count: Option<usize>,
    pub clusters: Option<usize>,
    pub seed: Option<u64>,
    pub event_start: Option<usize>,
    pub event_end: Option<usize>,
    pub horizon_hours: Option<usize>,
    pub reserve_mode: Option<ReserveMode>,
    pub reserve_factor: Option<f64>,
    pub loss_fraction: Option<f64>,
    pub voll: Option<f64>,
    pub load_profile: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub plots: Option<bool>,
    pub lp_export: Option<bool>,
    pub time_limit_s: Option<f64>,
    pub max_nodes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// MATPOWER case file [default: shipped 30-bus case].
    #[arg(long)]
    pub case: Option<PathBuf>,
    /// Fleet JSON [default: shipped fleet].
    #[arg(long)]
    pub fleet: Option<PathBuf>,
    /// Hazard JSON [default: shipped hazard].
    #[arg(long)]
    pub hazard: Option<PathBuf>,
    /// Offer JSON [default: shipped offers].
    #[arg(long)]
    pub offers: Option<PathBuf>,
    /// Sampled scenarios [default: 1000].
    #[arg(long)]
    pub count: Option<usize>,
    /// Representatives kept by k-means [default: 10].
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Overrides the hazard seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// First event hour; overrides the hazard window.
    #[arg(long)]
    pub event_start: Option<usize>,
    /// Last event hour; overrides the hazard window.
    #[arg(long)]
    pub event_end: Option<usize>,
    /// Reserve rule (1 + r) x demand <= supply + reserve.
    #[arg(long)]
    pub strict_reserve: bool,
    #[arg(long)]
    pub reserve_factor: Option<f64>,
    #[arg(long)]
    pub loss_fraction: Option<f64>,
    /// Output directory [default: eventmarket-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG charts of the traces.
    #[arg(long)]
    pub plots: bool,
    /// Also write the clearing problem as market.lp.
    #[arg(long)]
    pub lp_export: bool,
    /// Stop branch-and-bound after this many seconds (exit 3).
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Stop branch-and-bound after this many nodes per block (exit 3).
    #[arg(long)]
    pub max_nodes: Option<usize>,
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Paths in a config file are relative to the file.
fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let mut c: RunConfig =
                    serde_json::from_str(&read(path)?).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new("."));
                for p in [&mut c.case, &mut c.fleet, &mut c.hazard, &mut c.offers, &mut c.out] {
                    rebase(base, p);
                }
                c
            }
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($f:ident <- $a:expr),*) => {$(if let Some(v) = $a.clone() { cfg.$f = Some(v); })*};
        }
        take!(case <- self.case, fleet <- self.fleet, hazard <- self.hazard, offers <- self.offers,
              count <- self.count, clusters <- self.clusters, seed <- self.seed,
              event_start <- self.event_start, event_end <- self.event_end,
              reserve_factor <- self.reserve_factor, loss_fraction <- self.loss_fraction,
              out <- self.out, time_limit_s <- self.time_limit, max_nodes <- self.max_nodes);
        if self.strict_reserve {
            cfg.reserve_mode = Some(ReserveMode::Strict);
        }
        if self.plots {
            cfg.plots = Some(true);
        }
        if self.lp_export {
            cfg.lp_export = Some(true);
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("eventmarket-out"))
    }

    fn text(path: &Option<PathBuf>, shipped: &str) -> Result<String, Failure> {
        match path {
            Some(p) => read(p),
            None => Ok(shipped.to_string()),
        }
    }

    pub fn case_text(&self) -> Result<String, Failure> {
        Self::text(&self.case, benchmark::CASE30)
    }

    pub fn params(&self) -> MarketParams {
        let d = MarketParams::default();
        MarketParams {
            reserve_factor: self.reserve_factor.unwrap_or(d.reserve_factor),
            horizon_hours: self.horizon_hours.unwrap_or(benchmark::HORIZON_HOURS),
            loss_fraction: self.loss_fraction.unwrap_or(d.loss_fraction),
            voll: self.voll.unwrap_or(d.voll),
            reserve_mode: self.reserve_mode.unwrap_or(d.reserve_mode),
        }
    }

    pub fn offers(&self) -> Result<OfferConfig, Failure> {
        Ok(OfferConfig::from_json(&Self::text(&self.offers, benchmark::OFFERS)?)?)
    }

    /// Case with the fleet attached, hazard with overrides applied, and the plan.
    pub fn study(&self) -> Result<StudyInputs, Failure> {
        let params = self.params();
        let case = benchmark::prepare_case(&self.case_text()?, &Self::text(&self.fleet, benchmark::FLEET)?)?;
        let mut hazard = HazardConfig::from_json(&Self::text(&self.hazard, benchmark::HAZARD_6_12)?)?;
        if let Some(s) = self.seed {
            hazard.seed = s;
        }
        if let Some(a) = self.event_start {
            hazard.event_start_hour = a;
        }
        if let Some(b) = self.event_end {
            hazard.event_end_hour = b;
        }
        hazard.validate(params.horizon_hours)?;
        let mut plan = PhasePlan::new(params.horizon_hours, hazard.window());
        plan.scenario_count = self.count.unwrap_or(DEFAULT_SCENARIO_COUNT);
        plan.clusters = self.clusters.unwrap_or(DEFAULT_CLUSTERS);
        plan.load_profile = self.load_profile.clone().unwrap_or_default();
        plan.validate()?;
        if plan.clusters > plan.scenario_count {
            return Err(Failure::config(format!(
                "k exceeds scenario count ({} clusters for {} scenarios)",
                plan.clusters, plan.scenario_count
            )));
        }
        Ok(StudyInputs {
            case,
            hazard,
            offers: self.offers()?,
            params,
            plan,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        run: RunArgs,
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"count": 50, "clusters": 4, "seed": 7, "case": "grid.m", "reserve_mode": "strict"}"#).unwrap();
        let w = Wrap::parse_from(["x", "--config", path.to_str().unwrap(), "--seed", "9"]);
        let cfg = w.run.resolve().unwrap();
        assert_eq!(cfg.count, Some(50));
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.case, Some(dir.path().join("grid.m")));
        assert_eq!(cfg.params().reserve_mode, ReserveMode::Strict);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"cont": 50}"#).unwrap();
        let w = Wrap::parse_from(["x", "--config", path.to_str().unwrap()]);
        assert_eq!(w.run.resolve().unwrap_err().code, 2);
    }

    #[test]
    fn defaults_are_the_shipped_study() {
        let w = Wrap::parse_from(["x", "--event-end", "9"]);
        let study = w.run.resolve().unwrap().study().unwrap();
        assert_eq!(study.plan.event_window, (6, 9));
        assert_eq!(study.plan.scenario_count, 1000);
        assert_eq!(study.case.buses.len(), 30);
    }
}

//! Outage scenarios: Monte Carlo sampling of component failures, outage
//! demand measured with DC OPF, and k-means reduction to weighted medoids.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcopf::{dc_opf, Availability, DcOpfOptions, DcOpfResult};
use crate::error::{CoreError, Result};
use crate::network::NetworkCase;

pub const DEFAULT_OUTAGE_PRICE: f64 = 200.0;
const KMEANS_TOL: f64 = 1e-9;
const KMEANS_MAX_ITER: usize = 300;

fn default_outage_price() -> f64 {
    DEFAULT_OUTAGE_PRICE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardConfig {
    pub branch_fail_prob: f64,
    pub gen_fail_prob: f64,
    /// Per-branch probabilities keyed by 1-based branch number.
    #[serde(default)]
    pub branch_overrides: BTreeMap<usize, f64>,
    /// Per-generator probabilities keyed by 1-based generator number.
    #[serde(default)]
    pub gen_overrides: BTreeMap<usize, f64>,
    pub event_start_hour: usize,
    pub event_end_hour: usize,
    pub seed: u64,
    /// $/MWh paid for restored outage demand.
    #[serde(default = "default_outage_price")]
    pub outage_price: f64,
    #[serde(default)]
    pub area_outage_price: BTreeMap<usize, f64>,
}

impl HazardConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let probs = [self.branch_fail_prob, self.gen_fail_prob]
            .into_iter()
            .chain(self.branch_overrides.values().copied())
            .chain(self.gen_overrides.values().copied());
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::Argument(format!("failure probability {p} outside [0, 1]")));
            }
        }
        if !(1 <= self.event_start_hour && self.event_start_hour <= self.event_end_hour && self.event_end_hour <= horizon) {
            return Err(CoreError::Argument(format!(
                "event window [{}, {}] must satisfy 1 <= start <= end <= {horizon}",
                self.event_start_hour, self.event_end_hour
            )));
        }
        Ok(())
    }

    pub fn window(&self) -> (usize, usize) {
        (self.event_start_hour, self.event_end_hour)
    }

    fn branch_prob(&self, k: usize) -> f64 {
        self.branch_overrides.get(&(k + 1)).copied().unwrap_or(self.branch_fail_prob)
    }

    fn gen_prob(&self, k: usize) -> f64 {
        self.gen_overrides.get(&(k + 1)).copied().unwrap_or(self.gen_fail_prob)
    }

    pub fn price_for(&self, area: usize) -> f64 {
        self.area_outage_price.get(&area).copied().unwrap_or(self.outage_price)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageScenario {
    pub scenario_id: usize,
    /// 1-based branch numbers.
    pub failed_branches: Vec<usize>,
    /// 1-based generator numbers.
    pub failed_generators: Vec<usize>,
    /// Area ids, the row order of the matrices below.
    pub areas: Vec<usize>,
    /// MW per (area, hour); hour `t` is column `t - 1`.
    pub outage_demand: Vec<Vec<f64>>,
    /// $/MWh per (area, hour).
    pub outage_price: Vec<Vec<f64>>,
    pub duration_window: (usize, usize),
    pub weight: f64,
    /// Number of sampled scenarios this one stands for.
    #[serde(default = "one_member")]
    pub cluster_size: usize,
}

fn one_member() -> usize {
    1
}

impl OutageScenario {
    pub fn horizon(&self) -> usize {
        self.outage_demand.first().map_or(0, |r| r.len())
    }

    pub fn event_hours(&self) -> std::ops::RangeInclusive<usize> {
        self.duration_window.0..=self.duration_window.1
    }

    pub fn total_demand(&self) -> f64 {
        self.outage_demand.iter().flatten().sum()
    }

    /// Total outage demand of hour `t` (1-based) over all areas.
    pub fn hour_demand(&self, t: usize) -> f64 {
        self.outage_demand.iter().map(|r| r[t - 1]).sum()
    }

    pub fn availability(&self, case: &NetworkCase) -> Availability {
        let mut a = Availability::intact(case);
        for &b in &self.failed_branches {
            a.branch_up[b - 1] = false;
        }
        for &g in &self.failed_generators {
            a.gen_up[g - 1] = false;
        }
        a
    }
}

/// Draw `count` failure sets. Scenario `i` uses its own stream of the
/// seeded generator, so the draws do not depend on evaluation order.
pub fn sample_scenarios(case: &NetworkCase, hazard: &HazardConfig, count: usize, horizon: usize) -> Result<Vec<OutageScenario>> {
    if count == 0 {
        return Err(CoreError::Argument("scenario count must be at least 1".into()));
    }
    hazard.validate(horizon)?;
    let areas = case.areas();
    let out = (0..count)
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(hazard.seed);
            rng.set_stream(id as u64);
            let mut failed_branches = Vec::new();
            for k in 0..case.branches.len() {
                let u: f64 = rng.random();
                if case.branches[k].in_service && u < hazard.branch_prob(k) {
                    failed_branches.push(k + 1);
                }
            }
            let mut failed_generators = Vec::new();
            for (k, g) in case.generators.iter().enumerate() {
                if g.fleet_index.is_some() {
                    continue;
                }
                let u: f64 = rng.random();
                if g.in_service && u < hazard.gen_prob(k) {
                    failed_generators.push(k + 1);
                }
            }
            OutageScenario {
                scenario_id: id,
                failed_branches,
                failed_generators,
                areas: areas.clone(),
                outage_demand: vec![vec![0.0; horizon]; areas.len()],
                outage_price: areas.iter().map(|&a| vec![hazard.price_for(a); horizon]).collect(),
                duration_window: hazard.window(),
                weight: 1.0 / count as f64,
                cluster_size: 1,
            }
        })
        .collect();
    Ok(out)
}

fn area_totals(case: &NetworkCase, areas: &[usize], per_bus: &[f64]) -> Vec<f64> {
    let pos: BTreeMap<usize, usize> = areas.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let mut out = vec![0.0; areas.len()];
    for (b, v) in case.buses.iter().zip(per_bus) {
        out[pos[&b.area]] += v;
    }
    out
}

/// Fill `outage_demand` for the event hours: shed per area under the
/// scenario's failures, less the shed the intact network already has in
/// that hour (`baseline[t - 1]`). Hours with the same load profile share
/// one solve.
pub fn compute_outage_demand(
    case: &NetworkCase,
    scenario: &OutageScenario,
    baseline: &[DcOpfResult],
    load_profile: &[Vec<f64>],
    options: &DcOpfOptions,
) -> Result<OutageScenario> {
    let mut out = scenario.clone();
    let horizon = scenario.horizon();
    if baseline.len() < horizon || load_profile.len() < horizon {
        return Err(CoreError::Argument("baseline and load profile must cover the horizon".into()));
    }
    for row in &mut out.outage_demand {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    if scenario.failed_branches.is_empty() && scenario.failed_generators.is_empty() {
        return Ok(out);
    }
    let avail = scenario.availability(case);
    let mut cache: Vec<(&Vec<f64>, Vec<f64>)> = Vec::new();
    for t in scenario.event_hours() {
        let scale = &load_profile[t - 1];
        let shed = match cache.iter().find(|(s, _)| *s == scale) {
            Some((_, shed)) => shed.clone(),
            None => {
                let r = dc_opf(case, &avail, scale, &[], options)?;
                cache.push((scale, r.shed.clone()));
                r.shed
            }
        };
        let now = area_totals(case, &scenario.areas, &shed);
        let before = area_totals(case, &scenario.areas, &baseline[t - 1].shed);
        for (j, (n, b)) in now.iter().zip(&before).enumerate() {
            out.outage_demand[j][t - 1] = (n - b).max(0.0);
        }
    }
    Ok(out)
}

/// `compute_outage_demand` over many scenarios in parallel, order kept.
pub fn compute_all(
    case: &NetworkCase,
    scenarios: &[OutageScenario],
    baseline: &[DcOpfResult],
    load_profile: &[Vec<f64>],
    options: &DcOpfOptions,
) -> Result<Vec<OutageScenario>> {
    scenarios
        .par_iter()
        .map(|s| compute_outage_demand(case, s, baseline, load_profile, options))
        .collect()
}

/// Weight of one failed component in the clustering features, in MW
/// equivalents; small so outage demand dominates and failure sets only
/// separate scenarios of similar demand.
pub const FAILURE_FEATURE_WEIGHT: f64 = 0.1;

fn features(scenarios: &[OutageScenario]) -> Vec<Vec<f64>> {
    let entries: usize = scenarios.iter().map(|s| s.outage_demand.iter().map(|r| r.len()).sum::<usize>()).sum();
    let total: f64 = scenarios.iter().map(|s| s.total_demand()).sum();
    let mean = if entries == 0 { 0.0 } else { total / entries as f64 };
    // one indicator per component that fails anywhere in the set
    let branches: BTreeSet<usize> = scenarios.iter().flat_map(|s| s.failed_branches.iter().copied()).collect();
    let gens: BTreeSet<usize> = scenarios.iter().flat_map(|s| s.failed_generators.iter().copied()).collect();
    scenarios
        .iter()
        .map(|s| {
            let mut f: Vec<f64> = s.outage_demand.iter().flatten().copied().collect();
            let len = (s.duration_window.1 + 1).saturating_sub(s.duration_window.0) as f64;
            f.push(len * mean);
            let flag = |hit: bool| if hit { FAILURE_FEATURE_WEIGHT } else { 0.0 };
            f.extend(branches.iter().map(|b| flag(s.failed_branches.contains(b))));
            f.extend(gens.iter().map(|g| flag(s.failed_generators.contains(g))));
            f
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = dist2(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. Returns the assignment
/// and the final centroids.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> (Vec<usize>, Vec<Vec<f64>>) {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centroids.push(points[first].clone());
    chosen[first] = true;
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if di > 0.0 && u < di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            while d[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // every point coincides with a centre already
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.push(points[pick].clone());
    }

    let dim = points.first().map_or(0, |p| p.len());
    let mut assign = vec![0; n];
    for _ in 0..KMEANS_MAX_ITER {
        for (i, p) in points.iter().enumerate() {
            assign[i] = nearest(p, &centroids).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, x) in sums[assign[i]].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            let next = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                // reseed with the point farthest from its own centroid
                let far = (0..n)
                    .map(|i| (i, dist2(&points[i], &centroids[assign[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                if far.1 > 0.0 {
                    assign[far.0] = c;
                    points[far.0].clone()
                } else {
                    centroids[c].clone()
                }
            };
            shift = shift.max(dist2(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assign[i] = nearest(p, &centroids).0;
    }
    (assign, centroids)
}

/// Reduce to at most `k` weighted medoids. Clusters that end up empty
/// (possible when fewer than `k` distinct scenarios exist) are dropped.
pub fn reduce_scenarios(scenarios: &[OutageScenario], k: usize, seed: u64) -> Result<Vec<OutageScenario>> {
    if k == 0 || k > scenarios.len() {
        return Err(CoreError::Argument(format!(
            "k exceeds scenario count ({k} clusters for {} scenarios)",
            scenarios.len()
        )));
    }
    let points = features(scenarios);
    let (assign, centroids) = kmeans(&points, k, seed);
    let total: usize = scenarios.iter().map(|s| s.cluster_size).sum();
    let mut reps = Vec::new();
    for (c, cen) in centroids.iter().enumerate() {
        let members: Vec<usize> = (0..scenarios.len()).filter(|&i| assign[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let medoid = members
            .iter()
            .copied()
            .min_by(|&a, &b| {
                dist2(&points[a], cen)
                    .total_cmp(&dist2(&points[b], cen))
                    .then(scenarios[a].scenario_id.cmp(&scenarios[b].scenario_id))
            })
            .expect("non-empty cluster");
        let size: usize = members.iter().map(|&i| scenarios[i].cluster_size).sum();
        let mut rep = scenarios[medoid].clone();
        rep.weight = size as f64 / total as f64;
        rep.cluster_size = size;
        reps.push(rep);
    }
    reps.sort_by_key(|s| s.scenario_id);
    // exact-sum weights: put the rounding residue on the largest cluster
    let sum: f64 = reps.iter().map(|r| r.weight).sum();
    if let Some(big) = reps.iter_mut().max_by(|a, b| a.cluster_size.cmp(&b.cluster_size).then(b.scenario_id.cmp(&a.scenario_id))) {
        big.weight += 1.0 - sum;
    }
    Ok(reps)
}

/// Sampled and reduced sets with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub seed: u64,
    pub horizon_hours: usize,
    pub sampled: Vec<OutageScenario>,
    pub representatives: Vec<OutageScenario>,
}

impl ScenarioSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `scenario_id,weight,area,h1..hH` demand rows.
pub fn demand_csv(scenarios: &[OutageScenario]) -> Result<String> {
    let horizon = scenarios.first().map_or(0, |s| s.horizon());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scenario_id".to_string(), "weight".into(), "area".into()];
    header.extend((1..=horizon).map(|t| format!("h{t}")));
    w.write_record(&header)?;
    for s in scenarios {
        for (j, row) in s.outage_demand.iter().enumerate() {
            let mut rec = vec![s.scenario_id.to_string(), format!("{}", s.weight), s.areas[j].to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
    }
    crate::finish_csv(w)
}

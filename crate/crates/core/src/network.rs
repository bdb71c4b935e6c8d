//! Transmission case data: MATPOWER text in and out, plus case validation.
//!
//! Quantities are kept in the units of the case file (MW, MVAr, p.u. for
//! impedances and voltages). Solvers divide by `base_mva` themselves.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fleet::MobileResource;

pub const BUS_PQ: u8 = 1;
pub const BUS_PV: u8 = 2;
pub const BUS_REF: u8 = 3;
pub const BUS_ISOLATED: u8 = 4;

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 21;
const BRANCH_COLS: usize = 13;

/// Spacing of the default bus layout, miles.
pub const GRID_SPACING_MILES: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub bus_type: u8,
    pub load_p: f64,
    pub load_q: f64,
    pub gs: f64,
    pub bs: f64,
    pub area: usize,
    pub vm: f64,
    pub va: f64,
    pub base_kv: f64,
    pub zone: f64,
    pub v_max: f64,
    pub v_min: f64,
    /// Miles; not part of MATPOWER data.
    pub coords: (f64, f64),
    pub extra: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub resistance: f64,
    pub reactance: f64,
    pub charging: f64,
    /// MW; infinite when the case gives a zero rating.
    pub flow_limit: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    pub tap: f64,
    pub shift_deg: f64,
    pub in_service: bool,
    pub ang_min: f64,
    pub ang_max: f64,
    pub extra: Vec<f64>,
}

impl Branch {
    /// Off-nominal tap ratio; MATPOWER writes 0 for a plain line.
    pub fn ratio(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }
}

/// Convex piecewise-linear cost as breakpoints (MW, $/h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSegment {
    pub start_mw: f64,
    pub end_mw: f64,
    /// $/MWh
    pub price: f64,
}

impl CostCurve {
    pub fn linear(p_min: f64, p_max: f64, price: f64) -> Self {
        CostCurve {
            points: vec![(p_min, 0.0), (p_max, price * (p_max - p_min))],
        }
    }

    pub fn segments(&self) -> Vec<CostSegment> {
        self.points
            .windows(2)
            .map(|w| CostSegment {
                start_mw: w[0].0,
                end_mw: w[1].0,
                price: (w[1].1 - w[0].1) / (w[1].0 - w[0].0),
            })
            .collect()
    }

    /// Cost at `p`, extrapolating the end segments.
    pub fn eval(&self, p: f64) -> f64 {
        let segs = self.segments();
        if segs.is_empty() {
            return self.points.first().map_or(0.0, |q| q.1);
        }
        let k = segs.iter().position(|s| p <= s.end_mw).unwrap_or(segs.len() - 1);
        self.points[k].1 + segs[k].price * (p - segs[k].start_mw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub q_max: f64,
    pub q_min: f64,
    pub vg: f64,
    pub mbase: f64,
    pub in_service: bool,
    pub p_max: f64,
    pub p_min: f64,
    pub extra: Vec<f64>,
    pub cost_curve: CostCurve,
    /// The gencost row as written in the file, kept for round trips.
    pub gencost_raw: Option<Vec<f64>>,
    pub is_slack: bool,
    /// Index into `NetworkCase::fleet` for generators added by a fleet.
    pub fleet_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub fleet: Vec<MobileResource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

impl NetworkCase {
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Area ids in ascending order.
    pub fn areas(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.area).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load_p).sum()
    }

    /// Generators that belong to the original case, not to a fleet.
    pub fn grid_generators(&self) -> impl Iterator<Item = (usize, &Generator)> {
        self.generators.iter().enumerate().filter(|(_, g)| g.fleet_index.is_none())
    }

    /// Place buses on a square grid in id order, `GRID_SPACING_MILES` apart.
    pub fn apply_grid_layout(&mut self) {
        let mut order: Vec<usize> = (0..self.buses.len()).collect();
        order.sort_by_key(|&i| self.buses[i].id);
        let cols = (self.buses.len() as f64).sqrt().ceil().max(1.0) as usize;
        for (k, i) in order.into_iter().enumerate() {
            self.buses[i].coords = (
                (k % cols) as f64 * GRID_SPACING_MILES,
                (k / cols) as f64 * GRID_SPACING_MILES,
            );
        }
    }

    pub(crate) fn mark_slack(&mut self) {
        let refs: BTreeSet<usize> = self.buses.iter().filter(|b| b.bus_type == BUS_REF).map(|b| b.id).collect();
        let mut seen = BTreeSet::new();
        for g in &mut self.generators {
            g.is_slack = g.fleet_index.is_none() && refs.contains(&g.bus) && seen.insert(g.bus);
        }
    }
}

struct Matrix {
    rows: Vec<(usize, Vec<f64>)>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(p) => &line[..p],
        None => line,
    }
}

fn parse_numbers(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v = match t {
                "Inf" | "inf" => Ok(f64::INFINITY),
                "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
                _ => t.parse::<f64>(),
            };
            v.map_err(|_| CoreError::Parse {
                line,
                message: format!("non-numeric token '{t}'"),
            })
        })
        .collect()
}

/// Parse MATPOWER case text. Buses get the default grid layout.
pub fn parse_matpower_case(text: &str) -> Result<NetworkCase> {
    let mut name = String::from("case");
    let mut base_mva: Option<f64> = None;
    let mut matrices: HashMap<String, Matrix> = HashMap::new();
    let mut current: Option<(String, Matrix)> = None;
    let mut skipping_cell = false;

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = strip_comment(raw).trim();
        if skipping_cell {
            if line.contains('}') {
                skipping_cell = false;
            }
            continue;
        }
        if let Some((mname, mut m)) = current.take() {
            let (body, closes) = match line.find(']') {
                Some(p) => (&line[..p], true),
                None => (line, false),
            };
            for piece in body.split(';') {
                let nums = parse_numbers(piece, lineno)?;
                if !nums.is_empty() {
                    m.rows.push((lineno, nums));
                }
            }
            if closes {
                matrices.insert(mname, m);
            } else {
                current = Some((mname, m));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                name = rest[eq + 1..].trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some(eq) = line.find('=') else { continue };
        let lhs = line[..eq].trim();
        let key = lhs.strip_prefix("mpc.").unwrap_or(lhs).to_string();
        let rhs = line[eq + 1..].trim();
        if rhs.starts_with('{') {
            skipping_cell = !rhs.contains('}');
            continue;
        }
        if let Some(body) = rhs.strip_prefix('[') {
            let mut m = Matrix { rows: Vec::new() };
            match body.find(']') {
                Some(p) => {
                    for piece in body[..p].split(';') {
                        let nums = parse_numbers(piece, lineno)?;
                        if !nums.is_empty() {
                            m.rows.push((lineno, nums));
                        }
                    }
                    matrices.insert(key, m);
                }
                None => {
                    for piece in body.split(';') {
                        let nums = parse_numbers(piece, lineno)?;
                        if !nums.is_empty() {
                            m.rows.push((lineno, nums));
                        }
                    }
                    current = Some((key, m));
                }
            }
            continue;
        }
        if key == "baseMVA" {
            let v = parse_numbers(rhs.trim_end_matches(';'), lineno)?;
            base_mva = Some(*v.first().ok_or_else(|| CoreError::Parse {
                line: lineno,
                message: "baseMVA has no value".into(),
            })?);
        }
    }
    if let Some((mname, _)) = current {
        return Err(CoreError::Parse {
            line: text.lines().count(),
            message: format!("matrix '{mname}' is not closed"),
        });
    }

    let base_mva = base_mva.ok_or_else(|| CoreError::MissingSection("baseMVA".into()))?;
    let take = |matrices: &mut HashMap<String, Matrix>, key: &str| {
        matrices.remove(key).ok_or_else(|| CoreError::MissingSection(key.into()))
    };
    let bus_m = take(&mut matrices, "bus")?;
    let gen_m = take(&mut matrices, "gen")?;
    let branch_m = take(&mut matrices, "branch")?;
    let gencost_m = matrices.remove("gencost");

    let check_cols = |rows: &[(usize, Vec<f64>)], need: usize, what: &str| -> Result<()> {
        for (line, r) in rows {
            if r.len() < need {
                return Err(CoreError::Parse {
                    line: *line,
                    message: format!("{what} row has {} columns, expected at least {need}", r.len()),
                });
            }
        }
        Ok(())
    };
    check_cols(&bus_m.rows, BUS_COLS, "bus")?;
    check_cols(&gen_m.rows, GEN_COLS, "gen")?;
    check_cols(&branch_m.rows, BRANCH_COLS, "branch")?;

    let buses: Vec<Bus> = bus_m
        .rows
        .iter()
        .map(|(_, r)| Bus {
            id: r[0] as usize,
            bus_type: r[1] as u8,
            load_p: r[2],
            load_q: r[3],
            gs: r[4],
            bs: r[5],
            area: r[6] as usize,
            vm: r[7],
            va: r[8],
            base_kv: r[9],
            zone: r[10],
            v_max: r[11],
            v_min: r[12],
            coords: (0.0, 0.0),
            extra: r[BUS_COLS..].to_vec(),
        })
        .collect();

    let branches: Vec<Branch> = branch_m
        .rows
        .iter()
        .map(|(_, r)| Branch {
            from_bus: r[0] as usize,
            to_bus: r[1] as usize,
            resistance: r[2],
            reactance: r[3],
            charging: r[4],
            flow_limit: if r[5] == 0.0 { f64::INFINITY } else { r[5] },
            rate_b: r[6],
            rate_c: r[7],
            tap: r[8],
            shift_deg: r[9],
            in_service: r[10] != 0.0,
            ang_min: r[11],
            ang_max: r[12],
            extra: r[BRANCH_COLS..].to_vec(),
        })
        .collect();

    let mut generators = Vec::with_capacity(gen_m.rows.len());
    for (i, (_, r)) in gen_m.rows.iter().enumerate() {
        let p_max = r[8];
        let p_min = r[9];
        let (cost_curve, raw) = match &gencost_m {
            Some(gc) => {
                let (line, row) = gc.rows.get(i).ok_or_else(|| CoreError::Parse {
                    line: gc.rows.last().map_or(0, |r| r.0),
                    message: format!("gencost has no row for generator {}", i + 1),
                })?;
                (gencost_to_curve(row, *line, i + 1, p_min, p_max)?, Some(row.clone()))
            }
            None => (CostCurve::linear(p_min, p_max, 0.0), None),
        };
        generators.push(Generator {
            bus: r[0] as usize,
            pg: r[1],
            qg: r[2],
            q_max: r[3],
            q_min: r[4],
            vg: r[5],
            mbase: r[6],
            in_service: r[7] > 0.0,
            p_max,
            p_min,
            extra: r[10..].to_vec(),
            cost_curve,
            gencost_raw: raw,
            is_slack: false,
            fleet_index: None,
        });
    }

    let mut case = NetworkCase {
        name,
        base_mva,
        buses,
        branches,
        generators,
        fleet: Vec::new(),
    };
    case.apply_grid_layout();
    case.mark_slack();
    Ok(case)
}

fn gencost_to_curve(row: &[f64], line: usize, gen: usize, p_min: f64, p_max: f64) -> Result<CostCurve> {
    let short = || CoreError::Parse {
        line,
        message: format!("gencost row for generator {gen} is too short"),
    };
    if row.len() < 4 {
        return Err(short());
    }
    let model = row[0] as i64;
    let n = row[3] as usize;
    match model {
        1 => {
            if row.len() < 4 + 2 * n {
                return Err(short());
            }
            let points = (0..n).map(|k| (row[4 + 2 * k], row[5 + 2 * k])).collect();
            Ok(CostCurve { points })
        }
        2 => {
            if row.len() < 4 + n {
                return Err(short());
            }
            let coeffs = &row[4..4 + n];
            let poly = |p: f64| coeffs.iter().fold(0.0, |acc, c| acc * p + c);
            // four evenly spaced breakpoints give three segments
            let points = (0..4)
                .map(|k| {
                    let p = p_min + (p_max - p_min) * k as f64 / 3.0;
                    (p, poly(p))
                })
                .collect();
            Ok(CostCurve { points })
        }
        other => Err(CoreError::UnsupportedModel { gen, model: other }),
    }
}

fn push_row(out: &mut String, vals: impl IntoIterator<Item = f64>) {
    out.push('\t');
    let mut first = true;
    for v in vals {
        if !first {
            out.push('\t');
        }
        first = false;
        if v == f64::INFINITY {
            out.push_str("Inf");
        } else if v == f64::NEG_INFINITY {
            out.push_str("-Inf");
        } else {
            let _ = write!(out, "{v}");
        }
    }
    out.push_str(";\n");
}

/// Serialise back to MATPOWER text. Coordinates and fleet data are not part
/// of the format and are dropped.
pub fn write_matpower_case(case: &NetworkCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", case.name);
    out.push_str("mpc.version = '2';\n");
    let _ = writeln!(out, "mpc.baseMVA = {};", case.base_mva);
    out.push_str("\n%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in &case.buses {
        let cols = [
            b.id as f64,
            b.bus_type as f64,
            b.load_p,
            b.load_q,
            b.gs,
            b.bs,
            b.area as f64,
            b.vm,
            b.va,
            b.base_kv,
            b.zone,
            b.v_max,
            b.v_min,
        ];
        push_row(&mut out, cols.into_iter().chain(b.extra.iter().copied()));
    }
    out.push_str("];\n\n%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for g in &case.generators {
        let cols = [
            g.bus as f64,
            g.pg,
            g.qg,
            g.q_max,
            g.q_min,
            g.vg,
            g.mbase,
            if g.in_service { 1.0 } else { 0.0 },
            g.p_max,
            g.p_min,
        ];
        push_row(&mut out, cols.into_iter().chain(g.extra.iter().copied()));
    }
    out.push_str("];\n\n%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n");
    for br in &case.branches {
        let cols = [
            br.from_bus as f64,
            br.to_bus as f64,
            br.resistance,
            br.reactance,
            br.charging,
            if br.flow_limit.is_infinite() { 0.0 } else { br.flow_limit },
            br.rate_b,
            br.rate_c,
            br.tap,
            br.shift_deg,
            if br.in_service { 1.0 } else { 0.0 },
            br.ang_min,
            br.ang_max,
        ];
        push_row(&mut out, cols.into_iter().chain(br.extra.iter().copied()));
    }
    out.push_str("];\n");
    if case.generators.iter().any(|g| g.gencost_raw.is_some()) {
        out.push_str("\n%% generator cost data\nmpc.gencost = [\n");
        for g in &case.generators {
            match &g.gencost_raw {
                Some(raw) => push_row(&mut out, raw.iter().copied()),
                None => {
                    let mut row = vec![1.0, 0.0, 0.0, g.cost_curve.points.len() as f64];
                    for &(p, c) in &g.cost_curve.points {
                        row.push(p);
                        row.push(c);
                    }
                    push_row(&mut out, row);
                }
            }
        }
        out.push_str("];\n");
    }
    out
}

/// Check the case invariants. An empty list means the case is usable.
pub fn validate_case(case: &NetworkCase) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |msg: String| {
        out.push(Diagnostic {
            severity: Severity::Error,
            message: msg,
        })
    };
    let mut ids = BTreeSet::new();
    for b in &case.buses {
        if !ids.insert(b.id) {
            err(format!("duplicate bus id {}", b.id));
        }
        if b.v_min >= b.v_max {
            err(format!("bus {}: v_min {} is not below v_max {}", b.id, b.v_min, b.v_max));
        }
    }
    for (k, br) in case.branches.iter().enumerate() {
        if !ids.contains(&br.from_bus) || !ids.contains(&br.to_bus) {
            err(format!("branch {}: dangling branch endpoint ({} -> {})", k + 1, br.from_bus, br.to_bus));
        }
        if br.from_bus == br.to_bus {
            err(format!("branch {}: both ends at bus {}", k + 1, br.from_bus));
        }
        if br.reactance <= 0.0 {
            err(format!("branch {}: reactance {} is not positive", k + 1, br.reactance));
        }
    }
    let slack = case.generators.iter().filter(|g| g.is_slack && g.in_service).count();
    if slack == 0 {
        err("no slack generator".into());
    } else if slack > 1 {
        err(format!("multiple slack generators ({slack}): multiple slack"));
    }
    for (k, g) in case.generators.iter().enumerate() {
        if !ids.contains(&g.bus) {
            err(format!("generator {}: unknown bus {}", k + 1, g.bus));
        }
        if g.p_min < 0.0 || g.p_min > g.p_max {
            err(format!("generator {}: limits [{}, {}] invalid", k + 1, g.p_min, g.p_max));
        }
        let pts = &g.cost_curve.points;
        if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
            err(format!("generator {}: cost breakpoints not strictly increasing", k + 1));
        } else {
            let segs = g.cost_curve.segments();
            if segs.windows(2).any(|w| w[1].price < w[0].price - 1e-9) {
                err(format!("generator {}: cost curve is not convex", k + 1));
            }
        }
    }
    for r in &case.fleet {
        for msg in r.problems() {
            err(msg);
        }
        if !ids.contains(&r.deployment_bus) {
            err(format!("{}: deployment bus {} not in case", r.label(), r.deployment_bus));
        }
    }
    if !ids.is_empty() && !connected(case) {
        err("network is not connected over in-service branches".into());
    }
    out
}

fn connected(case: &NetworkCase) -> bool {
    let idx = case.bus_index();
    let live: Vec<usize> = (0..case.buses.len()).filter(|&i| case.buses[i].bus_type != BUS_ISOLATED).collect();
    let Some(&start) = live.first() else { return true };
    let mut adj = vec![Vec::new(); case.buses.len()];
    for br in case.branches.iter().filter(|b| b.in_service) {
        if let (Some(&f), Some(&t)) = (idx.get(&br.from_bus), idx.get(&br.to_bus)) {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let mut seen = vec![false; case.buses.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    live.iter().all(|&i| seen[i])
}

/// Connected components over a subset of branches; `None` for buses that
/// are isolated by type. Component ids follow the lowest bus position.
pub fn islands(case: &NetworkCase, branch_up: &[bool]) -> Vec<Option<usize>> {
    let n = case.buses.len();
    let idx = case.bus_index();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (k, br) in case.branches.iter().enumerate() {
        if !branch_up[k] {
            continue;
        }
        let (Some(&f), Some(&t)) = (idx.get(&br.from_bus), idx.get(&br.to_bus)) else { continue };
        let (a, b) = (find(&mut parent, f), find(&mut parent, t));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    (0..n)
        .map(|i| {
            if case.buses[i].bus_type == BUS_ISOLATED {
                return None;
            }
            let r = find(&mut parent, i);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            Some(label[r])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "function mpc = two
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t135\t1\t1.05\t0.95;
\t2\t1\t50\t10\t0\t0\t1\t1\t0\t135\t1\t1.05\t0.95;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t100\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
mpc.gencost = [
\t1\t0\t0\t2\t0\t0\t100\t1000;
];
";

    #[test]
    fn minimal_case_counts_and_slack() {
        let c = parse_matpower_case(TWO_BUS).unwrap();
        assert_eq!((c.buses.len(), c.branches.len(), c.generators.len()), (2, 1, 1));
        assert!(c.generators[0].is_slack);
        assert!(c.branches[0].flow_limit.is_infinite());
        assert_eq!(c.generators[0].cost_curve.segments()[0].price, 10.0);
        assert!(validate_case(&c).is_empty());
    }

    #[test]
    fn missing_bus_section_is_named() {
        let text = TWO_BUS.replace("mpc.bus = [", "mpc.busx = [");
        let e = parse_matpower_case(&text).unwrap_err();
        assert_eq!(e.to_string(), "missing section: bus");
    }

    #[test]
    fn bad_token_reports_line() {
        let text = TWO_BUS.replace("135\t1\t1.05\t0.95;\n\t2", "13x\t1\t1.05\t0.95;\n\t2");
        match parse_matpower_case(&text) {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unsupported_cost_model() {
        let text = TWO_BUS.replace("\t1\t0\t0\t2\t0\t0\t100\t1000;", "\t3\t0\t0\t2\t0\t0\t100\t1000;");
        assert!(matches!(
            parse_matpower_case(&text),
            Err(CoreError::UnsupportedModel { model: 3, .. })
        ));
    }

    #[test]
    fn polynomial_cost_becomes_three_segments() {
        let text = TWO_BUS.replace("\t1\t0\t0\t2\t0\t0\t100\t1000;", "\t2\t0\t0\t3\t0.01\t2\t0;");
        let c = parse_matpower_case(&text).unwrap();
        let segs = c.generators[0].cost_curve.segments();
        assert_eq!(segs.len(), 3);
        let f = |p: f64| 0.01 * p * p + 2.0 * p;
        for s in segs {
            let expected = (f(s.end_mw) - f(s.start_mw)) / (s.end_mw - s.start_mw);
            assert!((s.price - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn dangling_branch_and_double_slack() {
        let mut c = parse_matpower_case(TWO_BUS).unwrap();
        c.branches[0].to_bus = 99;
        let d = validate_case(&c);
        assert!(d.iter().any(|d| d.message.contains("dangling branch endpoint")));

        let mut c = parse_matpower_case(TWO_BUS).unwrap();
        c.buses[1].bus_type = BUS_REF;
        let mut g = c.generators[0].clone();
        g.bus = 2;
        c.generators.push(g);
        c.mark_slack();
        let d = validate_case(&c);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("multiple slack"));
    }

    #[test]
    fn grid_layout_spacing() {
        let c = parse_matpower_case(TWO_BUS).unwrap();
        assert_eq!(c.buses[0].coords, (0.0, 0.0));
        assert_eq!(c.buses[1].coords, (GRID_SPACING_MILES, 0.0));
    }
}

//! Newton-Raphson AC power flow in polar form.
//!
//! Each energized island is solved on its own. The island's reference bus
//! holds the slack; when the reference bus is outside the island the bus of
//! the largest in-service generator takes over, and an island fed only by
//! fleet injections uses the largest such bus at 1.0 p.u. Fleet resources
//! inject at unity power factor. Reactive limits are not enforced.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::network::{islands, NetworkCase, BUS_REF};

type Complex64 = Complex<f64>;

pub const MISMATCH_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50;

/// Everything the AC solve needs besides the network itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcOperatingPoint {
    /// MW per case generator; ignored for generators that are off.
    pub gen_p_mw: Vec<f64>,
    pub gen_on: Vec<bool>,
    /// Extra active injection per bus (fleet), MW.
    pub extra_p_mw: Vec<f64>,
    /// Voltage setpoint per bus held by a fleet resource, if any.
    #[serde(default)]
    pub support_vm: Vec<Option<f64>>,
    pub load_p_mw: Vec<f64>,
    pub load_q_mvar: Vec<f64>,
    pub branch_up: Vec<bool>,
}

impl AcOperatingPoint {
    /// Case loads, all branches as in the case, the given generator dispatch.
    pub fn from_dispatch(case: &NetworkCase, dispatch_mw: &[f64]) -> Self {
        AcOperatingPoint {
            gen_p_mw: dispatch_mw.to_vec(),
            gen_on: case.generators.iter().map(|g| g.in_service && g.fleet_index.is_none()).collect(),
            extra_p_mw: vec![0.0; case.buses.len()],
            support_vm: vec![None; case.buses.len()],
            load_p_mw: case.buses.iter().map(|b| b.load_p).collect(),
            load_q_mvar: case.buses.iter().map(|b| b.load_q).collect(),
            branch_up: case.branches.iter().map(|b| b.in_service).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcPfResult {
    pub voltage_mag: Vec<f64>,
    pub voltage_ang: Vec<f64>,
    /// False for buses in islands with no source; their voltages are 0.
    pub energized: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitSide {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageViolation {
    pub bus: usize,
    pub vm: f64,
    pub side: LimitSide,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Slack,
    Pv,
    Pq,
    Dead,
}

/// Bus admittance matrix over in-service branches (p.u.).
pub fn admittance(case: &NetworkCase, branch_up: &[bool]) -> DMatrix<Complex64> {
    let n = case.buses.len();
    let idx = case.bus_index();
    let base = case.base_mva;
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (k, br) in case.branches.iter().enumerate() {
        if !branch_up[k] {
            continue;
        }
        let (f, t) = (idx[&br.from_bus], idx[&br.to_bus]);
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.resistance, br.reactance);
        let bc = Complex64::new(0.0, br.charging / 2.0);
        let tap = Complex64::from_polar(br.ratio(), br.shift_deg.to_radians());
        let yff = (ys + bc) / (br.ratio() * br.ratio());
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        y[(f, f)] += yff;
        y[(t, t)] += ys + bc;
        y[(f, t)] += yft;
        y[(t, f)] += ytf;
    }
    for (i, b) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(b.gs, b.bs) / base;
    }
    y
}

/// Complex power injected at each bus by the network, p.u.
pub fn bus_injections(y: &DMatrix<Complex64>, vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    (0..v.len())
        .map(|i| {
            let mut cur = Complex64::new(0.0, 0.0);
            for j in 0..v.len() {
                let yij = y[(i, j)];
                if yij.re != 0.0 || yij.im != 0.0 {
                    cur += yij * v[j];
                }
            }
            v[i] * cur.conj()
        })
        .collect()
}

/// Scheduled net injections (generation minus load), p.u.
pub fn scheduled_injections(case: &NetworkCase, point: &AcOperatingPoint) -> Vec<Complex64> {
    let idx = case.bus_index();
    let base = case.base_mva;
    let mut s: Vec<Complex64> = (0..case.buses.len())
        .map(|i| Complex64::new(point.extra_p_mw[i] - point.load_p_mw[i], -point.load_q_mvar[i]) / base)
        .collect();
    for (k, g) in case.generators.iter().enumerate() {
        if point.gen_on[k] {
            s[idx[&g.bus]] += Complex64::new(point.gen_p_mw[k] / base, 0.0);
        }
    }
    s
}

fn assign_roles(case: &NetworkCase, point: &AcOperatingPoint) -> (Vec<Role>, Vec<f64>) {
    let n = case.buses.len();
    let idx = case.bus_index();
    let island = islands(case, &point.branch_up);
    let count = island.iter().flatten().max().map_or(0, |m| m + 1);
    let mut role = vec![Role::Pq; n];
    let mut vset = vec![1.0; n];
    // strongest source per island: (is reference, capacity, bus position)
    let mut best: Vec<Option<(bool, f64, usize)>> = vec![None; count];
    let consider = |b: usize, is_ref: bool, cap: f64, best: &mut Vec<Option<(bool, f64, usize)>>| {
        let Some(k) = island[b] else { return };
        let cand = (is_ref, cap, b);
        let better = match best[k] {
            None => true,
            Some((r, c, pos)) => (is_ref, cap) > (r, c) || ((is_ref, cap) == (r, c) && b < pos),
        };
        if better {
            best[k] = Some(cand);
        }
    };
    for (k, g) in case.generators.iter().enumerate() {
        if !point.gen_on[k] {
            continue;
        }
        let b = idx[&g.bus];
        role[b] = Role::Pv;
        vset[b] = g.vg;
        consider(b, case.buses[b].bus_type == BUS_REF, g.p_max, &mut best);
    }
    let has_grid_source: Vec<bool> = best.iter().map(|b| b.is_some()).collect();
    for b in 0..n {
        if let Some(Some(v)) = point.support_vm.get(b) {
            if role[b] == Role::Pq {
                role[b] = Role::Pv;
                vset[b] = *v;
            }
        }
        let regulated = matches!(point.support_vm.get(b), Some(Some(_)));
        if point.extra_p_mw[b] > 0.0 || regulated {
            if let Some(k) = island[b] {
                if !has_grid_source[k] {
                    consider(b, false, point.extra_p_mw[b], &mut best);
                }
            }
        }
    }
    for b in 0..n {
        match island[b] {
            None => role[b] = Role::Dead,
            Some(k) => match best[k] {
                None => role[b] = Role::Dead,
                Some((_, _, s)) if s == b => role[b] = Role::Slack,
                _ => {}
            },
        }
    }
    (role, vset)
}

/// Solve from a flat start. Non-convergence is reported, not raised.
pub fn ac_power_flow(case: &NetworkCase, point: &AcOperatingPoint) -> Result<AcPfResult> {
    let n = case.buses.len();
    if point.gen_p_mw.len() != case.generators.len()
        || point.gen_on.len() != case.generators.len()
        || point.extra_p_mw.len() != n
        || point.load_p_mw.len() != n
        || point.load_q_mvar.len() != n
        || point.branch_up.len() != case.branches.len()
    {
        return Err(CoreError::Argument("operating point does not match the case".into()));
    }
    let y = admittance(case, &point.branch_up);
    let spec = scheduled_injections(case, point);
    let (role, vset) = assign_roles(case, point);

    let mut vm: Vec<f64> = (0..n)
        .map(|i| match role[i] {
            Role::Dead => 0.0,
            Role::Slack | Role::Pv => vset[i],
            Role::Pq => 1.0,
        })
        .collect();
    let mut va = vec![0.0; n];
    let ang: Vec<usize> = (0..n).filter(|&i| matches!(role[i], Role::Pv | Role::Pq)).collect();
    let mag: Vec<usize> = (0..n).filter(|&i| role[i] == Role::Pq).collect();
    let energized: Vec<bool> = role.iter().map(|r| *r != Role::Dead).collect();
    let dim = ang.len() + mag.len();

    let mismatch = |vm: &[f64], va: &[f64]| -> (DVector<f64>, f64) {
        let calc = bus_injections(&y, vm, va);
        let mut f = DVector::zeros(dim);
        for (r, &i) in ang.iter().enumerate() {
            f[r] = spec[i].re - calc[i].re;
        }
        for (r, &i) in mag.iter().enumerate() {
            f[ang.len() + r] = spec[i].im - calc[i].im;
        }
        let worst = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (f, worst)
    };

    let (mut f, mut worst) = mismatch(&vm, &va);
    let mut iterations = 0;
    while worst > MISMATCH_TOL && iterations < MAX_ITERATIONS && worst.is_finite() {
        let jac = jacobian(&y, &vm, &va, &ang, &mag);
        let lu = jac.lu();
        let dx = lu.solve(&f).ok_or_else(|| {
            CoreError::Numerical(format!("singular power-flow Jacobian at iteration {}", iterations + 1))
        })?;
        for (r, &i) in ang.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in mag.iter().enumerate() {
            vm[i] *= 1.0 + dx[ang.len() + r];
        }
        iterations += 1;
        (f, worst) = mismatch(&vm, &va);
    }
    let converged = worst <= MISMATCH_TOL;
    Ok(AcPfResult {
        voltage_mag: vm,
        voltage_ang: va,
        energized,
        converged,
        iterations,
        max_mismatch: worst,
    })
}

/// Jacobian of the mismatch with respect to angles and relative magnitude
/// steps (dV/V), rows ordered as P(ang) then Q(mag).
fn jacobian(y: &DMatrix<Complex64>, vm: &[f64], va: &[f64], ang: &[usize], mag: &[usize]) -> DMatrix<f64> {
    let n = vm.len();
    let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    let ibus: Vec<Complex64> = (0..n).map(|i| (0..n).map(|j| y[(i, j)] * v[j]).sum()).collect();
    // dS/dVa and dS/dVm * Vm (standard complex forms)
    let ds_dva = |i: usize, j: usize| -> Complex64 {
        let j_unit = Complex64::new(0.0, 1.0);
        let mut d = -j_unit * v[i] * (y[(i, j)] * v[j]).conj();
        if i == j {
            d += j_unit * v[i] * ibus[i].conj();
        }
        d
    };
    let ds_dvm_rel = |i: usize, j: usize| -> Complex64 {
        let mut d = v[i] * (y[(i, j)] * v[j]).conj();
        if i == j {
            d += v[i] * ibus[i].conj();
        }
        d
    };
    let na = ang.len();
    let dim = na + mag.len();
    let mut jac = DMatrix::zeros(dim, dim);
    for (r, &i) in ang.iter().enumerate() {
        for (c, &j) in ang.iter().enumerate() {
            jac[(r, c)] = ds_dva(i, j).re;
        }
        for (c, &j) in mag.iter().enumerate() {
            jac[(r, na + c)] = ds_dvm_rel(i, j).re;
        }
    }
    for (r, &i) in mag.iter().enumerate() {
        for (c, &j) in ang.iter().enumerate() {
            jac[(na + r, c)] = ds_dva(i, j).im;
        }
        for (c, &j) in mag.iter().enumerate() {
            jac[(na + r, na + c)] = ds_dvm_rel(i, j).im;
        }
    }
    jac
}

/// Buses outside their [v_min, v_max] band (closed interval). Dead buses
/// are skipped.
pub fn check_voltage_limits(result: &AcPfResult, case: &NetworkCase) -> Result<Vec<VoltageViolation>> {
    if !result.converged {
        return Err(CoreError::Contract("voltage check needs a converged power flow".into()));
    }
    let mut out = Vec::new();
    for (i, b) in case.buses.iter().enumerate() {
        if !result.energized[i] {
            continue;
        }
        let vm = result.voltage_mag[i];
        if vm < b.v_min {
            out.push(VoltageViolation {
                bus: b.id,
                vm,
                side: LimitSide::Low,
            });
        } else if vm > b.v_max {
            out.push(VoltageViolation {
                bus: b.id,
                vm,
                side: LimitSide::High,
            });
        }
    }
    Ok(out)
}

/// One row per bus: `bus,energized,vm_pu,va_rad`.
pub fn voltages_csv(case: &NetworkCase, result: &AcPfResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bus", "energized", "vm_pu", "va_rad"])?;
    for (i, b) in case.buses.iter().enumerate() {
        w.write_record([
            b.id.to_string(),
            result.energized[i].to_string(),
            format!("{:.8}", result.voltage_mag[i]),
            format!("{:.8}", result.voltage_ang[i]),
        ])?;
    }
    crate::finish_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_matpower_case;

    /// Lossless line, unity power-factor load.
    fn two_bus(load_mw: f64, x: f64) -> NetworkCase {
        let text = format!(
            "mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1 0 135 1 1.05 0.95;
2 1 {load_mw} 0 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
1 0 0 100 -100 1 100 1 300 0 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
1 2 0 {x} 0 0 0 0 0 0 1 -360 360;
];
"
        );
        parse_matpower_case(&text).unwrap()
    }

    #[test]
    fn two_bus_matches_closed_form() {
        // Q balance at bus 2 gives V2 = cos d; P balance gives sin 2d = 2 x P
        let c = two_bus(100.0, 0.1);
        let r = ac_power_flow(&c, &AcOperatingPoint::from_dispatch(&c, &[0.0])).unwrap();
        assert!(r.converged);
        let d = 0.2f64.asin() / 2.0;
        assert!((r.voltage_ang[1] + d).abs() < 1e-9);
        assert!((r.voltage_mag[1] - d.cos()).abs() < 1e-9);
        assert!(r.max_mismatch <= MISMATCH_TOL);
    }

    #[test]
    fn single_bus_needs_no_iterations() {
        let text = "mpc.baseMVA = 100;
mpc.bus = [
1 3 10 5 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
1 10 0 100 -100 1.02 100 1 100 0 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
];
";
        let c = parse_matpower_case(text).unwrap();
        let r = ac_power_flow(&c, &AcOperatingPoint::from_dispatch(&c, &[10.0])).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.voltage_mag, vec![1.02]);
    }

    #[test]
    fn overload_beyond_the_nose_does_not_converge() {
        // maximum transfer of a lossless line is 1 / (2x) = 5 p.u.; the
        // generator is rated 300 MW, the load is 100 times that
        let c = two_bus(30_000.0, 0.1);
        let r = ac_power_flow(&c, &AcOperatingPoint::from_dispatch(&c, &[0.0])).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, MAX_ITERATIONS);
        assert!(matches!(check_voltage_limits(&r, &c), Err(CoreError::Contract(_))));
    }

    #[test]
    fn isolated_load_bus_is_dead() {
        let c = two_bus(50.0, 0.1);
        let mut p = AcOperatingPoint::from_dispatch(&c, &[0.0]);
        p.branch_up[0] = false;
        let r = ac_power_flow(&c, &p).unwrap();
        assert!(r.converged);
        assert_eq!(r.energized, vec![true, false]);
        assert!(check_voltage_limits(&r, &c).unwrap().is_empty());
    }

    #[test]
    fn fleet_injection_makes_an_island_slack() {
        let c = two_bus(50.0, 0.1);
        let mut p = AcOperatingPoint::from_dispatch(&c, &[0.0]);
        p.branch_up[0] = false;
        p.extra_p_mw[1] = 50.0;
        let r = ac_power_flow(&c, &p).unwrap();
        assert_eq!(r.energized, vec![true, true]);
        assert_eq!(r.voltage_mag[1], 1.0);
    }

    #[test]
    fn supported_bus_holds_its_setpoint() {
        let c = two_bus(100.0, 0.1);
        let mut p = AcOperatingPoint::from_dispatch(&c, &[0.0]);
        p.support_vm[1] = Some(1.0);
        let r = ac_power_flow(&c, &p).unwrap();
        assert!(r.converged);
        assert!((r.voltage_mag[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn limits_are_a_closed_interval() {
        let c = two_bus(100.0, 0.1);
        let mut r = ac_power_flow(&c, &AcOperatingPoint::from_dispatch(&c, &[0.0])).unwrap();
        r.voltage_mag[1] = 0.95;
        assert!(check_voltage_limits(&r, &c).unwrap().is_empty());
        r.voltage_mag[1] = 0.95 - 1e-9;
        let v = check_voltage_limits(&r, &c).unwrap();
        assert_eq!((v[0].bus, v[0].side), (2, LimitSide::Low));
        r.voltage_mag[1] = 1.05 + 1e-9;
        assert_eq!(check_voltage_limits(&r, &c).unwrap()[0].side, LimitSide::High);
        r.converged = false;
        assert!(matches!(check_voltage_limits(&r, &c), Err(CoreError::Contract(_))));
    }
}

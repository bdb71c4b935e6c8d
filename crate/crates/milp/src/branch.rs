//! Branch-and-bound over one connected block of a MILP.
//!
//! Node selection is best-bound with plunging: after a node branches, one
//! child is evaluated immediately (warm-started from the parent's basis) and
//! the sibling waits in the queue. A plunge ends when its node is pruned,
//! infeasible, or integral; the next node then comes off the queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use crate::error::{Result, SolverError};
use crate::problem::{MilpProblem, Sense};
use crate::simplex::{BasisSnapshot, LpModel, LpStatus, Simplex};
use crate::solution::{MilpSolution, SolveStatus};
use crate::Limits;

const INT_TOL: f64 = 1e-6;
const VERIFY_TOL: f64 = 1e-6;

struct Node {
    /// LP bound inherited from the parent, in internal (maximisation) units.
    bound: f64,
    id: usize,
    changes: Vec<(usize, f64, f64)>,
    basis: Rc<BasisSnapshot>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: larger bound first, then older node first
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Incumbent {
    objective: f64,
    values: Vec<f64>,
}

fn sense_sign(sense: Sense) -> f64 {
    match sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    }
}

fn gap_closed(bound: f64, incumbent: f64, limits: &Limits) -> bool {
    let gap = bound - incumbent;
    gap <= limits.abs_gap || gap <= limits.rel_gap * incumbent.abs().max(1e-10)
}

/// `true` when `a` is lexicographically smaller than `b` on a 1e-9 grid.
fn lex_smaller(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        let (x, y) = ((x * 1e9).round(), (y * 1e9).round());
        match x.total_cmp(&y) {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
    }
    false
}

pub(crate) fn branch_and_bound(problem: &MilpProblem, limits: &Limits, deadline: Option<Instant>) -> Result<MilpSolution> {
    let start = Instant::now();
    let sign = sense_sign(problem.sense);
    let model = LpModel::from_problem(problem);
    let mut lp = Simplex::new(&model);

    let int_vars: Vec<usize> = (0..problem.num_vars()).filter(|&j| problem.variables[j].integer).collect();
    let mut root_bounds = Vec::with_capacity(int_vars.len());
    for &j in &int_vars {
        let v = &problem.variables[j];
        let lo = if v.lower.is_finite() { (v.lower - 1e-9).ceil() } else { v.lower };
        let hi = if v.upper.is_finite() { (v.upper + 1e-9).floor() } else { v.upper };
        if lo > hi {
            return Ok(finish(MilpSolution::without_point(SolveStatus::Infeasible, f64::NAN), start));
        }
        lp.set_bounds(j, lo, hi);
        root_bounds.push((j, lo, hi));
    }

    let root = lp.solve()?;
    match root {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            let mut s = MilpSolution::without_point(SolveStatus::Infeasible, f64::NAN);
            s.lp_iterations = lp.iterations;
            return Ok(finish(s, start));
        }
        LpStatus::Unbounded => {
            let mut s = MilpSolution::without_point(SolveStatus::Unbounded, sign * f64::INFINITY);
            s.lp_iterations = lp.iterations;
            return Ok(finish(s, start));
        }
        LpStatus::IterationLimit => {
            let mut s = MilpSolution::without_point(SolveStatus::IterationLimit, f64::NAN);
            s.lp_iterations = lp.iterations;
            return Ok(finish(s, start));
        }
    }

    let mut incumbent: Option<Incumbent> = None;
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 0usize;
    let mut nodes = 0usize;
    let mut stopped: Option<SolveStatus> = None;
    let root_obj = lp.objective();

    // the node whose LP is currently loaded in `lp`
    let mut current: Option<(Vec<(usize, f64, f64)>, f64)> = Some((Vec::new(), root_obj));
    let mut current_solved = true;

    loop {
        let (changes, obj) = match current.take() {
            Some(c) => c,
            None => {
                let Some(node) = heap.pop() else { break };
                if let Some(inc) = &incumbent {
                    if gap_closed(node.bound, inc.objective, limits) {
                        // every remaining node is bounded by this one
                        heap.push(node);
                        break;
                    }
                }
                if let Some(max) = limits.max_nodes {
                    if nodes >= max {
                        heap.push(node);
                        stopped = Some(SolveStatus::GapLimit);
                        break;
                    }
                }
                if deadline.is_some_and(|d| Instant::now() >= d) {
                    heap.push(node);
                    stopped = Some(SolveStatus::GapLimit);
                    break;
                }
                nodes += 1;
                for &(j, lo, hi) in &root_bounds {
                    lp.set_bounds(j, lo, hi);
                }
                for &(j, lo, hi) in &node.changes {
                    lp.set_bounds(j, lo, hi);
                }
                lp.restore(&node.basis)?;
                current_solved = false;
                (node.changes, node.bound)
            }
        };

        let obj = if current_solved {
            obj
        } else {
            match lp.resolve()? {
                LpStatus::Optimal => lp.objective(),
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => {
                    return Err(SolverError::Malformed("node LP unbounded below a bounded root".into()));
                }
                LpStatus::IterationLimit => {
                    stopped = Some(SolveStatus::IterationLimit);
                    break;
                }
            }
        };
        current_solved = false;

        if let Some(inc) = &incumbent {
            if gap_closed(obj, inc.objective, limits) {
                continue;
            }
        }

        let x = lp.values();
        let mut branch: Option<(usize, f64)> = None;
        let mut best_dist = f64::INFINITY;
        for &j in &int_vars {
            let frac = x[j] - x[j].floor();
            if frac > INT_TOL && frac < 1.0 - INT_TOL {
                let dist = (frac - 0.5).abs();
                if dist < best_dist - 1e-12 {
                    best_dist = dist;
                    branch = Some((j, x[j]));
                }
            }
        }

        match branch {
            None => {
                let mut values = x.to_vec();
                for &j in &int_vars {
                    values[j] = values[j].round();
                }
                let better = match &incumbent {
                    None => true,
                    Some(inc) => {
                        obj > inc.objective + 1e-9 || (obj >= inc.objective - 1e-9 && lex_smaller(&values, &inc.values))
                    }
                };
                if better {
                    incumbent = Some(Incumbent { objective: obj, values });
                }
            }
            Some((j, val)) => {
                let snap = Rc::new(lp.snapshot());
                let (lo, hi) = changes
                    .iter()
                    .rev()
                    .find(|c| c.0 == j)
                    .map(|c| (c.1, c.2))
                    .or_else(|| root_bounds.iter().find(|c| c.0 == j).map(|c| (c.1, c.2)))
                    .expect("integer variable has root bounds");
                let mut down = changes.clone();
                down.push((j, lo, val.floor()));
                let mut up = changes;
                up.push((j, val.ceil(), hi));
                let up_first = val - val.floor() >= 0.5;
                let (dive, park) = if up_first { (up, down) } else { (down, up) };
                heap.push(Node {
                    bound: obj,
                    id: next_id,
                    changes: park,
                    basis: snap,
                });
                next_id += 1;
                let out_of_nodes = limits.max_nodes.is_some_and(|max| nodes >= max);
                if out_of_nodes || deadline.is_some_and(|d| Instant::now() >= d) {
                    heap.push(Node {
                        bound: obj,
                        id: next_id,
                        changes: dive,
                        basis: Rc::new(lp.snapshot()),
                    });
                    stopped = Some(SolveStatus::GapLimit);
                    break;
                }
                nodes += 1;
                for &(k, lo, hi) in &dive {
                    lp.set_bounds(k, lo, hi);
                }
                current = Some((dive, obj));
            }
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    let internal_bound = match &incumbent {
        Some(inc) => open_bound.max(inc.objective),
        None => open_bound,
    };
    let iterations = lp.iterations;
    drop(lp);

    let Some(inc) = incumbent else {
        let status = stopped.unwrap_or(SolveStatus::Infeasible);
        let bound = if status == SolveStatus::Infeasible {
            f64::NAN
        } else {
            sign * internal_bound + problem.objective_offset
        };
        let mut s = MilpSolution::without_point(status, bound);
        s.nodes = nodes;
        s.lp_iterations = iterations;
        return Ok(finish(s, start));
    };

    let (values, polish_iters) = polish(problem, &inc.values)?;
    let violation = problem.max_violation(&values);
    if violation.max() > VERIFY_TOL {
        return Err(SolverError::Malformed(format!(
            "incumbent fails verification: row {:.3e}, bound {:.3e}, integrality {:.3e}",
            violation.constraint, violation.bound, violation.integrality
        )));
    }
    let objective = problem.objective_value(&values);
    let bound = sign * internal_bound + problem.objective_offset;
    let bound = if sign > 0.0 { bound.max(objective) } else { bound.min(objective) };
    Ok(finish(
        MilpSolution {
            status: stopped.unwrap_or(SolveStatus::Optimal),
            objective,
            values,
            best_bound: bound,
            nodes,
            lp_iterations: iterations + polish_iters,
            wall_time: Duration::ZERO,
        },
        start,
    ))
}

fn finish(mut s: MilpSolution, start: Instant) -> MilpSolution {
    s.wall_time = start.elapsed();
    s
}

/// Fix the integers of `point` and re-solve the continuous part so the
/// returned vector has exact integers and consistent continuous values.
fn polish(problem: &MilpProblem, point: &[f64]) -> Result<(Vec<f64>, usize)> {
    let mut fixed = problem.clone();
    let mut any_int = false;
    for (v, &x) in fixed.variables.iter_mut().zip(point) {
        if v.integer {
            v.lower = x.round();
            v.upper = x.round();
            v.integer = false;
            any_int = true;
        }
    }
    if !any_int {
        return Ok((point.to_vec(), 0));
    }
    let model = LpModel::from_problem(&fixed);
    let mut lp = Simplex::new(&model);
    match lp.solve()? {
        LpStatus::Optimal => {
            let mut values = lp.values().to_vec();
            for (v, x) in problem.variables.iter().zip(values.iter_mut()) {
                if v.integer {
                    *x = x.round();
                }
            }
            Ok((values, lp.iterations))
        }
        _ => {
            let mut values = point.to_vec();
            for (v, x) in problem.variables.iter().zip(values.iter_mut()) {
                if v.integer {
                    *x = x.round();
                }
            }
            Ok((values, lp.iterations))
        }
    }
}

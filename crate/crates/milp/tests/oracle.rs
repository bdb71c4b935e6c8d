//! Brute-force cross-checks: binaries enumerated, continuous part solved by
//! vertex enumeration (independent of the simplex code) or by `solve_lp`.

use eventmarket_milp::{solve_lp, solve_milp, Limits, MilpProblem, Relation, Sense, SolveStatus, VarId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    problem: MilpProblem,
    bins: usize,
    conts: usize,
}

/// Random feasible bounded instance: rows are built around a random point.
fn random_instance(seed: u64, max_bins: usize, max_conts: usize, rows: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = rng.random_range(1..=max_bins);
    let conts = rng.random_range(1..=max_conts);
    let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let mut p = MilpProblem::new(format!("rand{seed}"), sense);
    let mut point = Vec::new();
    for i in 0..bins {
        let c = rng.random_range(-10..=10) as f64;
        p.add_binary(format!("b{i}"), c);
        point.push(rng.random_range(0..=1) as f64);
    }
    for i in 0..conts {
        let u = rng.random_range(1..=6) as f64;
        let c = rng.random_range(-10..=10) as f64 * 0.5;
        p.add_var(format!("y{i}"), 0.0, u, c);
        point.push(rng.random_range(0.0..u));
    }
    let n = bins + conts;
    for r in 0..rows {
        let mut terms = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.6) {
                terms.push((VarId(j), rng.random_range(-5..=5) as f64));
            }
        }
        let act: f64 = terms.iter().map(|&(v, a)| a * point[v.0]).sum();
        let (rel, rhs) = match rng.random_range(0..10) {
            0 => (Relation::Eq, act),
            1..=5 => (Relation::Le, (act + rng.random_range(0.0..3.0)).floor()),
            _ => (Relation::Ge, (act - rng.random_range(0.0..3.0)).ceil()),
        };
        // rounding can cut off the seed point; the instance may then be infeasible, which is fine
        p.add_constraint(format!("r{r}"), terms, rel, rhs);
    }
    Instance { problem: p, bins, conts }
}

/// Solve `A y (rel) b` over the box by enumerating basic solutions.
fn vertex_lp(cost: &[f64], rows: &[(Vec<f64>, Relation, f64)], upper: &[f64], maximize: bool) -> Option<f64> {
    let n = cost.len();
    // every candidate hyperplane: rows plus box faces
    let mut planes: Vec<(Vec<f64>, f64)> = rows.iter().map(|(a, _, b)| (a.clone(), *b)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), 0.0));
        planes.push((e, upper[j]));
    }
    let feasible = |y: &[f64]| {
        y.iter().zip(upper).all(|(&v, &u)| v >= -1e-9 && v <= u + 1e-9)
            && rows.iter().all(|(a, rel, b)| {
                let act: f64 = a.iter().zip(y).map(|(x, y)| x * y).sum();
                match rel {
                    Relation::Le => act <= b + 1e-9,
                    Relation::Ge => act >= b - 1e-9,
                    Relation::Eq => (act - b).abs() <= 1e-9,
                }
            })
    };
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn combos(k: usize, start: usize, total: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if k == pick.len() {
            f(pick);
            return;
        }
        for i in start..total {
            pick[k] = i;
            combos(k + 1, i + 1, total, pick, f);
        }
    }
    let total = planes.len();
    combos(0, 0, total, &mut pick, &mut |sel| {
        let mut m: Vec<Vec<f64>> = sel.iter().map(|&i| {
            let mut row = planes[i].0.clone();
            row.push(planes[i].1);
            row
        }).collect();
        // Gaussian elimination with partial pivoting
        for c in 0..n {
            let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            if m[p][c].abs() < 1e-10 {
                return;
            }
            m.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        let y: Vec<f64> = (0..n).map(|i| m[i][n] / m[i][i]).collect();
        if feasible(&y) {
            let v: f64 = cost.iter().zip(&y).map(|(c, y)| c * y).sum();
            best = Some(match best {
                None => v,
                Some(b) if maximize => b.max(v),
                Some(b) => b.min(v),
            });
        }
    });
    best
}

/// Fix binaries to `mask` and return the reduced continuous problem data.
fn fixed_rows(inst: &Instance, mask: u32) -> (Vec<(Vec<f64>, Relation, f64)>, f64) {
    let p = &inst.problem;
    let b: Vec<f64> = (0..inst.bins).map(|i| ((mask >> i) & 1) as f64).collect();
    let rows = p
        .constraints
        .iter()
        .map(|c| {
            let mut a = vec![0.0; inst.conts];
            let mut rhs = c.rhs;
            for &(v, coef) in &c.terms {
                if v.0 < inst.bins {
                    rhs -= coef * b[v.0];
                } else {
                    a[v.0 - inst.bins] += coef;
                }
            }
            (a, c.relation, rhs)
        })
        .collect();
    let fixed_obj = (0..inst.bins).map(|i| p.objective[i] * b[i]).sum();
    (rows, fixed_obj)
}

fn brute_force(inst: &Instance, lp: impl Fn(&Instance, u32) -> Option<f64>) -> Option<f64> {
    let maximize = inst.problem.sense == Sense::Maximize;
    let mut best: Option<f64> = None;
    for mask in 0..(1u32 << inst.bins) {
        if let Some(v) = lp(inst, mask) {
            best = Some(match best {
                None => v,
                Some(b) if maximize => b.max(v),
                Some(b) => b.min(v),
            });
        }
    }
    best
}

fn by_vertices(inst: &Instance, mask: u32) -> Option<f64> {
    let (rows, fixed) = fixed_rows(inst, mask);
    let cost = &inst.problem.objective[inst.bins..];
    let upper: Vec<f64> = inst.problem.variables[inst.bins..].iter().map(|v| v.upper).collect();
    vertex_lp(cost, &rows, &upper, inst.problem.sense == Sense::Maximize).map(|v| v + fixed)
}

fn by_simplex(inst: &Instance, mask: u32) -> Option<f64> {
    let mut p = inst.problem.clone();
    for i in 0..inst.bins {
        let v = ((mask >> i) & 1) as f64;
        p.variables[i].lower = v;
        p.variables[i].upper = v;
    }
    let s = solve_lp(&p).unwrap();
    (s.status == SolveStatus::Optimal).then_some(s.objective)
}

fn check(inst: &Instance, expected: Option<f64>) {
    let s = solve_milp(&inst.problem, &Limits::default()).unwrap();
    match expected {
        None => assert_eq!(s.status, SolveStatus::Infeasible, "{}", inst.problem.name),
        Some(v) => {
            assert_eq!(s.status, SolveStatus::Optimal, "{}", inst.problem.name);
            assert!((s.objective - v).abs() <= 1e-6 * (1.0 + v.abs()), "{}: {} vs {}", inst.problem.name, s.objective, v);
            let viol = inst.problem.max_violation(&s.values);
            assert!(viol.max() <= 1e-6);
            match inst.problem.sense {
                Sense::Maximize => assert!(s.objective <= s.best_bound + 1e-9),
                Sense::Minimize => assert!(s.objective >= s.best_bound - 1e-9),
            }
        }
    }
}

#[test]
fn matches_vertex_enumeration_on_small_instances() {
    for seed in 0..120 {
        let inst = random_instance(seed, 6, 3, 4);
        check(&inst, brute_force(&inst, by_vertices));
    }
}

#[test]
fn matches_enumeration_with_lp_per_assignment() {
    for seed in 1000..1200 {
        let inst = random_instance(seed, 12, 20, 8);
        check(&inst, brute_force(&inst, by_simplex));
    }
}

#[test]
fn lp_matches_vertex_enumeration() {
    for seed in 5000..5150 {
        let mut inst = random_instance(seed, 1, 4, 5);
        // relax the single binary away by fixing it to zero
        inst.problem.variables[0].upper = 0.0;
        inst.problem.variables[0].integer = false;
        let expected = by_vertices(&inst, 0);
        let s = solve_lp(&inst.problem).unwrap();
        match expected {
            None => assert_eq!(s.status, SolveStatus::Infeasible, "seed {seed}"),
            Some(v) => assert!((s.objective - v).abs() <= 1e-7 * (1.0 + v.abs()), "seed {seed}: {} vs {v}", s.objective),
        }
    }
}

#[test]
fn same_answer_for_any_thread_count() {
    // several independent blocks so the parallel path is exercised
    let mut p = MilpProblem::new("blocks", Sense::Maximize);
    for k in 0..6 {
        let inst = random_instance(77 + k, 8, 5, 5);
        let base = p.num_vars();
        for (v, c) in inst.problem.variables.iter().zip(&inst.problem.objective) {
            let id = p.add_var(format!("k{k}_{}", v.name), v.lower, v.upper, *c);
            p.variables[id.0].integer = v.integer;
        }
        for c in &inst.problem.constraints {
            let terms = c.terms.iter().map(|&(v, a)| (VarId(base + v.0), a)).collect();
            let rel = c.relation;
            let rhs = c.rhs;
            p.add_constraint(format!("k{k}_{}", c.name), terms, rel, rhs);
        }
        if inst.problem.sense == Sense::Minimize {
            for j in base..p.num_vars() {
                p.objective[j] = -p.objective[j];
            }
        }
    }
    let reference = solve_milp(&p, &Limits { threads: Some(1), ..Limits::default() }).unwrap();
    for threads in [2, 4, 8] {
        let s = solve_milp(&p, &Limits { threads: Some(threads), ..Limits::default() }).unwrap();
        assert_eq!(s.status, reference.status);
        assert_eq!(s.objective.to_bits(), reference.objective.to_bits());
        assert_eq!(s.values, reference.values);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incumbent_never_beats_bound(seed in 0u64..1_000_000) {
        let inst = random_instance(seed, 10, 8, 6);
        let s = solve_milp(&inst.problem, &Limits::default()).unwrap();
        if s.status.has_solution() {
            prop_assert!(inst.problem.max_violation(&s.values).max() <= 1e-6);
            match inst.problem.sense {
                Sense::Maximize => prop_assert!(s.objective <= s.best_bound + 1e-9),
                Sense::Minimize => prop_assert!(s.objective >= s.best_bound - 1e-9),
            }
        }
    }

    #[test]
    fn repeated_solves_are_identical(seed in 0u64..1_000_000) {
        let inst = random_instance(seed, 8, 6, 5);
        let a = solve_milp(&inst.problem, &Limits::default()).unwrap();
        let b = solve_milp(&inst.problem, &Limits::default()).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.values, b.values);
    }
}

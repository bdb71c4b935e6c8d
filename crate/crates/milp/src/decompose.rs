use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::branch::branch_and_bound;
use crate::error::Result;
use crate::problem::{MilpProblem, VarId};
use crate::solution::{MilpSolution, SolveStatus};
use crate::Limits;

struct Block {
    vars: Vec<usize>,
    rows: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Connected components of the variable/row incidence graph, ordered by
/// their smallest variable index. Variables that appear in no row share one
/// block.
fn blocks(problem: &MilpProblem) -> Vec<Block> {
    let n = problem.num_vars();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut in_row = vec![false; n];
    for c in &problem.constraints {
        let mut first: Option<usize> = None;
        for &(v, a) in &c.terms {
            if a == 0.0 {
                continue;
            }
            in_row[v.0] = true;
            match first {
                None => first = Some(v.0),
                Some(f) => {
                    let (ra, rb) = (find(&mut parent, f), find(&mut parent, v.0));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut root_block = vec![usize::MAX; n];
    let mut out: Vec<Block> = Vec::new();
    let mut loose = Vec::new();
    for j in 0..n {
        if !in_row[j] {
            loose.push(j);
            continue;
        }
        let r = find(&mut parent, j);
        if root_block[r] == usize::MAX {
            root_block[r] = out.len();
            out.push(Block {
                vars: Vec::new(),
                rows: Vec::new(),
            });
        }
        out[root_block[r]].vars.push(j);
    }
    for (i, c) in problem.constraints.iter().enumerate() {
        if let Some(&(v, _)) = c.terms.iter().find(|t| t.1 != 0.0) {
            let r = find(&mut parent, v.0);
            out[root_block[r]].rows.push(i);
        }
    }
    if !loose.is_empty() {
        out.push(Block {
            vars: loose,
            rows: Vec::new(),
        });
    }
    out.sort_by_key(|b| b.vars[0]);
    out
}

fn subproblem(problem: &MilpProblem, block: &Block) -> MilpProblem {
    let mut local = vec![usize::MAX; problem.num_vars()];
    let mut sub = MilpProblem::new(problem.name.clone(), problem.sense);
    for (k, &j) in block.vars.iter().enumerate() {
        local[j] = k;
        sub.variables.push(problem.variables[j].clone());
        sub.objective.push(problem.objective[j]);
    }
    for &i in &block.rows {
        let c = &problem.constraints[i];
        let terms = c
            .terms
            .iter()
            .filter(|t| t.1 != 0.0)
            .map(|&(v, a)| (VarId(local[v.0]), a))
            .collect();
        sub.add_constraint(c.name.clone(), terms, c.relation, c.rhs);
    }
    sub
}

fn rank(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::GapLimit => 1,
        SolveStatus::IterationLimit => 2,
        SolveStatus::Unbounded => 3,
        SolveStatus::Infeasible => 4,
    }
}

pub(crate) fn solve_blocks(problem: &MilpProblem, limits: &Limits, deadline: Option<Instant>) -> Result<MilpSolution> {
    // rows without any variable must hold on their own
    for c in &problem.constraints {
        if c.terms.iter().all(|t| t.1 == 0.0) && c.violation(&vec![0.0; problem.num_vars()]) > 1e-9 {
            return Ok(MilpSolution::without_point(SolveStatus::Infeasible, f64::NAN));
        }
    }
    let blocks = blocks(problem);
    let results: Vec<Result<MilpSolution>> = blocks
        .par_iter()
        .map(|b| branch_and_bound(&subproblem(problem, b), limits, deadline))
        .collect();

    let mut status = SolveStatus::Optimal;
    let mut values = vec![0.0; problem.num_vars()];
    let mut bound = problem.objective_offset;
    let mut nodes = 0;
    let mut iterations = 0;
    let mut have_point = true;
    for (block, res) in blocks.iter().zip(results) {
        let sol = res?;
        if rank(sol.status) > rank(status) {
            status = sol.status;
        }
        nodes += sol.nodes;
        iterations += sol.lp_iterations;
        bound += sol.best_bound;
        if sol.values.is_empty() {
            have_point = false;
        } else {
            for (&j, &x) in block.vars.iter().zip(&sol.values) {
                values[j] = x;
            }
        }
    }
    if matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded) || !have_point {
        let mut s = MilpSolution::without_point(status, if status == SolveStatus::Infeasible { f64::NAN } else { bound });
        s.nodes = nodes;
        s.lp_iterations = iterations;
        return Ok(s);
    }
    Ok(MilpSolution {
        status,
        objective: problem.objective_value(&values),
        values,
        best_bound: bound,
        nodes,
        lp_iterations: iterations,
        wall_time: Duration::ZERO,
    })
}

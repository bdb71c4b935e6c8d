//! Small-scale LP/MILP solver: bounded revised simplex for relaxations and
//! best-bound branch-and-bound for integrality, plus LP-format text I/O.
//!
//! [`solve_milp`] first splits a problem into independent blocks (connected
//! components of the variable/row incidence graph) and solves each block on
//! its own, in parallel when a thread pool is available. Block results are
//! merged in block order, so the answer never depends on scheduling.

mod branch;
mod decompose;
pub mod error;
pub mod lp_format;
mod problem;
mod simplex;
mod solution;

use std::time::{Duration, Instant};

pub use error::{Result, SolverError};
pub use problem::{Constraint, MilpProblem, Relation, Sense, VarId, Variable, Violation};
pub use solution::{MilpSolution, SolutionSummary, SolveStatus};

/// Termination controls for [`solve_milp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Limits {
    pub rel_gap: f64,
    pub abs_gap: f64,
    /// Branch nodes per block.
    pub max_nodes: Option<usize>,
    pub time_limit: Option<Duration>,
    /// Worker threads for block-parallel solving; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            rel_gap: 1e-6,
            abs_gap: 1e-9,
            max_nodes: None,
            time_limit: None,
            threads: None,
        }
    }
}

/// Solve the continuous relaxation (integrality marks are ignored).
pub fn solve_lp(problem: &MilpProblem) -> Result<MilpSolution> {
    problem.validate()?;
    let relaxed = problem.relaxed();
    branch::branch_and_bound(&relaxed, &Limits::default(), None)
}

/// Branch-and-bound solve honouring integrality marks.
pub fn solve_milp(problem: &MilpProblem, limits: &Limits) -> Result<MilpSolution> {
    problem.validate()?;
    let start = Instant::now();
    let deadline = limits.time_limit.map(|t| start + t);
    let mut sol = match limits.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SolverError::Malformed(format!("thread pool: {e}")))?;
            pool.install(|| decompose::solve_blocks(problem, limits, deadline))?
        }
        None => decompose::solve_blocks(problem, limits, deadline)?,
    };
    sol.wall_time = start.elapsed();
    Ok(sol)
}

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::problem::MilpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    GapLimit,
    IterationLimit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::IterationLimit => "iteration_limit",
        }
    }

    /// Whether a primal solution vector is attached.
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::GapLimit | SolveStatus::IterationLimit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Objective in the problem's own sense, including the offset.
    pub objective: f64,
    /// Empty when no feasible point is known.
    pub values: Vec<f64>,
    /// Best proven bound on the optimum (upper for maximization).
    pub best_bound: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_time: Duration,
}

impl MilpSolution {
    pub(crate) fn without_point(status: SolveStatus, bound: f64) -> Self {
        Self {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            best_bound: bound,
            nodes: 0,
            lp_iterations: 0,
            wall_time: Duration::ZERO,
        }
    }

    pub fn value(&self, var: crate::VarId) -> f64 {
        self.values[var.0]
    }

    /// Two-column `variable,value` dump.
    pub fn to_csv(&self, problem: &MilpProblem) -> String {
        let mut out = String::from("variable,value\n");
        for (v, x) in problem.variables.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{}", v.name, x);
        }
        out
    }

    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary {
            status: self.status,
            objective: finite_or_none(self.objective),
            best_bound: finite_or_none(self.best_bound),
            nodes: self.nodes,
            lp_iterations: self.lp_iterations,
        }
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// JSON-friendly solve summary (no timing, so it is reproducible).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub nodes: usize,
    pub lp_iterations: usize,
}

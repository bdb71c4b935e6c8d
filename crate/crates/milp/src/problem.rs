//! Problem representation shared by the LP and MILP solvers.
//!
//! Constraints are stored row-major as sparse term lists; the simplex engine
//! builds its own column-major copy.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};

/// Index of a variable inside a [`MilpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    /// May be `f64::NEG_INFINITY`.
    pub lower: f64,
    /// May be `f64::INFINITY`.
    pub upper: f64,
    pub integer: bool,
}

impl Variable {
    pub fn is_binary(&self) -> bool {
        self.integer && self.lower == 0.0 && self.upper == 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violates this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A linear program with optional integrality marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub name: String,
    pub sense: Sense,
    pub variables: Vec<Variable>,
    /// Dense objective coefficients, one per variable.
    pub objective: Vec<f64>,
    /// Constant added to the objective value.
    pub objective_offset: f64,
    pub constraints: Vec<Constraint>,
}

impl MilpProblem {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        Self {
            name: name.into(),
            sense,
            variables: Vec::new(),
            objective: Vec::new(),
            objective_offset: 0.0,
            constraints: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, obj: f64) -> VarId {
        self.push_var(name.into(), lower, upper, obj, false)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, obj: f64) -> VarId {
        self.push_var(name.into(), 0.0, 1.0, obj, true)
    }

    pub fn add_integer(&mut self, name: impl Into<String>, lower: f64, upper: f64, obj: f64) -> VarId {
        self.push_var(name.into(), lower, upper, obj, true)
    }

    fn push_var(&mut self, name: String, lower: f64, upper: f64, obj: f64, integer: bool) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            name,
            lower,
            upper,
            integer,
        });
        self.objective.push(obj);
        id
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_integers(&self) -> usize {
        self.variables.iter().filter(|v| v.integer).count()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.is_binary()).count()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    /// Copy of this problem with every integrality mark dropped.
    pub fn relaxed(&self) -> MilpProblem {
        let mut p = self.clone();
        for v in &mut p.variables {
            v.integer = false;
        }
        p
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self
                .objective
                .iter()
                .zip(values)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    /// Largest row, bound, or integrality violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> Violation {
        let mut out = Violation::default();
        for c in &self.constraints {
            out.constraint = out.constraint.max(c.violation(values));
        }
        for (v, &x) in self.variables.iter().zip(values) {
            out.bound = out.bound.max((v.lower - x).max(0.0)).max((x - v.upper).max(0.0));
            if v.integer {
                out.integrality = out.integrality.max((x - x.round()).abs());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.variables.len() {
            return Err(SolverError::Malformed(format!(
                "{} objective coefficients for {} variables",
                self.objective.len(),
                self.variables.len()
            )));
        }
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(SolverError::Malformed(format!("variable {} has invalid bounds", v.name)));
            }
            if v.lower > v.upper {
                return Err(SolverError::Malformed(format!(
                    "variable {} has lower bound {} above upper bound {}",
                    v.name, v.lower, v.upper
                )));
            }
        }
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(SolverError::Malformed(format!(
                    "objective coefficient of {} is not finite",
                    self.variables[j].name
                )));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(SolverError::Malformed(format!("row {} has non-finite right-hand side", c.name)));
            }
            for &(v, a) in &c.terms {
                if v.0 >= self.variables.len() {
                    return Err(SolverError::Malformed(format!(
                        "row {} references undeclared variable index {}",
                        c.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::Malformed(format!("row {} has a non-finite coefficient", c.name)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Violation {
    pub constraint: f64,
    pub bound: f64,
    pub integrality: f64,
}

impl Violation {
    pub fn max(&self) -> f64 {
        self.constraint.max(self.bound).max(self.integrality)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_by_relation() {
        let mut p = MilpProblem::new("t", Sense::Maximize);
        let x = p.add_var("x", 0.0, 10.0, 1.0);
        p.add_constraint("le", vec![(x, 1.0)], Relation::Le, 2.0);
        p.add_constraint("ge", vec![(x, 1.0)], Relation::Ge, 3.0);
        let v = p.max_violation(&[2.5]);
        assert!((v.constraint - 0.5).abs() < 1e-12);
        assert_eq!(v.bound, 0.0);
    }

    #[test]
    fn validate_rejects_inverted_bounds() {
        let mut p = MilpProblem::new("t", Sense::Minimize);
        p.add_var("x", 1.0, 0.0, 0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn validate_rejects_dangling_reference() {
        let mut p = MilpProblem::new("t", Sense::Minimize);
        p.add_var("x", 0.0, 1.0, 0.0);
        p.add_constraint("r", vec![(VarId(3), 1.0)], Relation::Le, 1.0);
        assert!(matches!(p.validate(), Err(SolverError::Malformed(_))));
    }
}

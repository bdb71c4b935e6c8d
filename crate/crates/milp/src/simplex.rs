//! Bounded-variable revised simplex with an explicit basis inverse.
//!
//! Every row `i` gets a logical variable `s_i = a_i x` whose bounds encode the
//! row relation, so the working system is `[A | -I] z = 0` with all variables
//! boxed. Phase 1 adds one artificial per row whose logical starts infeasible
//! and minimises their sum. A dual simplex reuses an optimal basis after bound
//! changes, which is what branch-and-bound needs.

use crate::error::{Result, SolverError};
use crate::problem::{MilpProblem, Relation, Sense};

pub(crate) const FEAS_TOL: f64 = 1e-7;
pub(crate) const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_INTERVAL: usize = 100;
const DEGENERATE_SWITCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Column-major copy of a problem in maximisation form.
#[derive(Debug, Clone)]
pub(crate) struct LpModel {
    pub n: usize,
    pub m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    /// Objective over structurals, already negated for minimisation.
    cost: Vec<f64>,
    /// Bounds of structurals followed by logicals.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpModel {
    pub fn from_problem(problem: &MilpProblem) -> Self {
        let n = problem.variables.len();
        let m = problem.constraints.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in problem.constraints.iter().enumerate() {
            for &(v, a) in &c.terms {
                if a != 0.0 {
                    cols[v.0].push((i, a));
                }
            }
        }
        // merge duplicate entries of the same variable in one row
        for col in &mut cols {
            col.sort_by_key(|&(i, _)| i);
            col.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            col.retain(|&(_, a)| a != 0.0);
        }
        let sign = match problem.sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        };
        let cost = problem.objective.iter().map(|c| sign * c).collect();
        let mut lower: Vec<f64> = problem.variables.iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = problem.variables.iter().map(|v| v.upper).collect();
        for c in &problem.constraints {
            let (l, u) = match c.relation {
                Relation::Le => (f64::NEG_INFINITY, c.rhs),
                Relation::Ge => (c.rhs, f64::INFINITY),
                Relation::Eq => (c.rhs, c.rhs),
            };
            lower.push(l);
            upper.push(u);
        }
        Self {
            n,
            m,
            cols,
            cost,
            lower,
            upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BasisSnapshot {
    basis: Vec<usize>,
    at_upper: Vec<bool>,
}

/// Working state of one simplex solve. Variable indices: `0..n` structural,
/// `n..n+m` logical, `n+m..n+2m` artificial.
#[derive(Debug, Clone)]
pub(crate) struct Simplex<'a> {
    model: &'a LpModel,
    n: usize,
    m: usize,
    total: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    art_sign: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    /// Basis position of each variable, `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    at_upper: Vec<bool>,
    /// Row-major `m x m` inverse; row `p` belongs to basis position `p`.
    binv: Vec<f64>,
    updates: usize,
    pub iterations: usize,
    call_iterations: usize,
    pub iteration_limit: usize,
}

impl<'a> Simplex<'a> {
    pub fn new(model: &'a LpModel) -> Self {
        let n = model.n;
        let m = model.m;
        let total = n + 2 * m;
        let mut lower = model.lower.clone();
        let mut upper = model.upper.clone();
        lower.extend(std::iter::repeat_n(0.0, m));
        upper.extend(std::iter::repeat_n(0.0, m));
        Self {
            model,
            n,
            m,
            total,
            lower,
            upper,
            art_sign: vec![1.0; m],
            x: vec![0.0; total],
            basis: Vec::new(),
            pos: vec![usize::MAX; total],
            at_upper: vec![false; total],
            binv: Vec::new(),
            updates: 0,
            iterations: 0,
            call_iterations: 0,
            iteration_limit: 50 * (n + m) + 1000,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn objective(&self) -> f64 {
        self.model
            .cost
            .iter()
            .zip(&self.x[..self.n])
            .map(|(c, x)| c * x)
            .sum()
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
        if self.pos[j] == usize::MAX {
            self.place_nonbasic(j);
        }
    }

    fn place_nonbasic(&mut self, j: usize) {
        let (l, u) = (self.lower[j], self.upper[j]);
        if self.at_upper[j] && u.is_finite() {
            self.x[j] = u;
        } else if l.is_finite() {
            self.x[j] = l;
            self.at_upper[j] = false;
        } else if u.is_finite() {
            self.x[j] = u;
            self.at_upper[j] = true;
        } else {
            self.x[j] = 0.0;
            self.at_upper[j] = false;
        }
    }


    /// Sparse column of variable `j` in `[A | -I | diag(sign)]`.
    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in &self.model.cols[j] {
                f(i, a);
            }
        } else if j < self.n + self.m {
            f(j - self.n, -1.0);
        } else {
            let i = j - self.n - self.m;
            f(i, self.art_sign[i]);
        }
    }

    fn col_dot(&self, j: usize, row: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_col(j, |i, a| s += a * row[i]);
        s
    }

    /// `B^-1 a_j`, indexed by basis position.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        self.for_col(j, |i, a| {
            for (p, o) in out.iter_mut().enumerate() {
                *o += self.binv[p * m + i] * a;
            }
        });
        out
    }

    fn binv_row(&self, p: usize) -> &[f64] {
        &self.binv[p * self.m..(p + 1) * self.m]
    }

    /// Simplex multipliers for the given cost function.
    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for p in 0..m {
            let c = cost(self.basis[p]);
            if c != 0.0 {
                let row = self.binv_row(p);
                for (yi, b) in y.iter_mut().zip(row) {
                    *yi += c * b;
                }
            }
        }
        y
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    /// Recompute basic values from nonbasic ones: `z_B = -B^-1 N z_N`.
    fn recompute_primal(&mut self) {
        let m = self.m;
        let mut r = vec![0.0; m];
        for j in 0..self.total {
            if self.pos[j] == usize::MAX && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_col(j, |i, a| r[i] -= a * xj);
            }
        }
        for p in 0..m {
            let row = self.binv_row(p);
            let v: f64 = row.iter().zip(&r).map(|(b, ri)| b * ri).sum();
            let j = self.basis[p];
            self.x[j] = v;
        }
    }

    /// Rebuild `B^-1` from scratch, exploiting the unit columns of logicals
    /// and artificials: only the structural block needs a dense inverse.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut row_is_unit = vec![false; m];
        let mut structural: Vec<(usize, usize)> = Vec::new(); // (position, var)
        for (p, &j) in self.basis.iter().enumerate() {
            if j >= self.n {
                let i = (j - self.n) % m;
                if row_is_unit[i] {
                    return Err(self.singular());
                }
                row_is_unit[i] = true;
            } else {
                structural.push((p, j));
            }
        }
        let free_rows: Vec<usize> = (0..m).filter(|&i| !row_is_unit[i]).collect();
        let k = structural.len();
        if free_rows.len() != k {
            return Err(self.singular());
        }
        let mut row_slot = vec![usize::MAX; m];
        for (r, &i) in free_rows.iter().enumerate() {
            row_slot[i] = r;
        }
        // M = A[free_rows, structural], k x k
        let mut mat = vec![0.0; k * k];
        for (t, &(_, j)) in structural.iter().enumerate() {
            for &(i, a) in &self.model.cols[j] {
                if row_slot[i] != usize::MAX {
                    mat[row_slot[i] * k + t] = a;
                }
            }
        }
        let minv = invert_dense(&mut mat, k).ok_or_else(|| self.singular())?;

        let mut binv = vec![0.0; m * m];
        // structural position t: x_t = sum_r Minv[t][r] v[free_rows[r]]
        for (t, &(p, _)) in structural.iter().enumerate() {
            for (r, &i) in free_rows.iter().enumerate() {
                binv[p * m + i] = minv[t * k + r];
            }
        }
        // unit positions: sign * x_p + sum_t A[i,t] x_t = v_i
        let mut w = vec![0.0; m * k]; // rows indexed by original row i
        for (t, &(_, j)) in structural.iter().enumerate() {
            for &(i, a) in &self.model.cols[j] {
                if row_is_unit[i] {
                    let minv_row = &minv[t * k..(t + 1) * k];
                    for (wr, mv) in w[i * k..(i + 1) * k].iter_mut().zip(minv_row) {
                        *wr += a * mv;
                    }
                }
            }
        }
        for (p, &j) in self.basis.iter().enumerate() {
            if j >= self.n {
                let i = (j - self.n) % m;
                let sign = if j < self.n + m { -1.0 } else { self.art_sign[i] };
                binv[p * m + i] = 1.0 / sign;
                for (r, &ri) in free_rows.iter().enumerate() {
                    binv[p * m + ri] = -w[i * k + r] / sign;
                }
            }
        }
        self.binv = binv;
        self.updates = 0;
        Ok(())
    }

    fn singular(&self) -> SolverError {
        let dump: Vec<String> = self.basis.iter().map(|j| self.var_label(*j)).collect();
        SolverError::SingularBasis {
            iteration: self.iterations,
            basis_dump: dump.join(" "),
        }
    }

    fn var_label(&self, j: usize) -> String {
        if j < self.n {
            format!("x{j}")
        } else if j < self.n + self.m {
            format!("s{}", j - self.n)
        } else {
            format!("a{}", j - self.n - self.m)
        }
    }

    /// Product-form update of `B^-1` after column `alpha` enters at position `r`.
    fn update_inverse(&mut self, r: usize, alpha: &[f64]) -> Result<()> {
        let m = self.m;
        let piv = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        for (p, row) in before.chunks_mut(m).enumerate() {
            let f = alpha[p];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
            }
        }
        for (q, row) in after.chunks_mut(m).enumerate() {
            let f = alpha[r + 1 + q];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
            }
        }
        self.updates += 1;
        if self.updates >= REFACTOR_INTERVAL {
            self.refactor()?;
            self.recompute_primal();
        }
        Ok(())
    }

    fn pivot(&mut self, enter: usize, leave_pos: usize, alpha: &[f64]) -> Result<()> {
        let leave = self.basis[leave_pos];
        self.pos[leave] = usize::MAX;
        self.basis[leave_pos] = enter;
        self.pos[enter] = leave_pos;
        // snap the leaving variable onto the bound it reached
        let (l, u) = (self.lower[leave], self.upper[leave]);
        if u.is_finite() && (!l.is_finite() || (self.x[leave] - u).abs() < (self.x[leave] - l).abs()) {
            self.x[leave] = u;
            self.at_upper[leave] = true;
        } else if l.is_finite() {
            self.x[leave] = l;
            self.at_upper[leave] = false;
        } else {
            self.at_upper[leave] = false;
        }
        self.update_inverse(leave_pos, alpha)
    }

    /// Cold start from the all-logical basis, then both phases.
    pub fn solve(&mut self) -> Result<LpStatus> {
        self.call_iterations = 0;
        let n = self.n;
        let m = self.m;
        for j in 0..self.total {
            self.pos[j] = usize::MAX;
            self.at_upper[j] = false;
        }
        for j in 0..n {
            self.place_nonbasic(j);
        }
        let mut activity = vec![0.0; m];
        for j in 0..n {
            let xj = self.x[j];
            if xj != 0.0 {
                for &(i, a) in &self.model.cols[j] {
                    activity[i] += a * xj;
                }
            }
        }
        self.basis = vec![0; m];
        let mut needs_phase1 = false;
        for (i, &act) in activity.iter().enumerate() {
            let s = n + i;
            let a = n + m + i;
            let (l, u) = (self.lower[s], self.upper[s]);
            self.lower[a] = 0.0;
            self.upper[a] = 0.0;
            self.x[a] = 0.0;
            if act >= l - FEAS_TOL && act <= u + FEAS_TOL {
                self.basis[i] = s;
                self.pos[s] = i;
                self.x[s] = act;
            } else {
                needs_phase1 = true;
                let target = if act < l { l } else { u };
                self.x[s] = target;
                self.at_upper[s] = act > u;
                self.art_sign[i] = if target > act { 1.0 } else { -1.0 };
                self.upper[a] = f64::INFINITY;
                self.basis[i] = a;
                self.pos[a] = i;
                self.x[a] = (target - act).abs();
            }
        }
        self.refactor()?;
        self.recompute_primal();

        if needs_phase1 {
            let art_start = n + m;
            let phase1 = move |j: usize| if j >= art_start { -1.0 } else { 0.0 };
            match self.primal(&phase1)? {
                LpStatus::Optimal => {}
                LpStatus::IterationLimit => return Ok(LpStatus::IterationLimit),
                // bounded below by zero, so unbounded cannot happen; treat as numerical trouble
                other => return Ok(other),
            }
            let infeas: f64 = (art_start..self.total).map(|j| self.x[j]).sum();
            if infeas > FEAS_TOL {
                return Ok(LpStatus::Infeasible);
            }
            for j in art_start..self.total {
                self.upper[j] = 0.0;
                if self.pos[j] == usize::MAX {
                    self.x[j] = 0.0;
                }
            }
            self.drive_out_artificials()?;
        }
        let model = self.model;
        let n = self.n;
        let real = move |j: usize| if j < n { model.cost[j] } else { 0.0 };
        self.primal(&real)
    }

    /// Swap artificials left in the basis (at zero) for nonartificial columns.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let art_start = self.n + self.m;
        for p in 0..self.m {
            let j = self.basis[p];
            if j < art_start {
                continue;
            }
            let row = self.binv_row(p).to_vec();
            let mut best: Option<(usize, f64)> = None;
            for q in 0..art_start {
                if self.pos[q] != usize::MAX {
                    continue;
                }
                let a = self.col_dot(q, &row);
                if a.abs() > 1e-7 && best.is_none_or(|(_, b)| a.abs() > b.abs()) {
                    best = Some((q, a));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(q);
                self.pivot(q, p, &alpha)?;
                self.recompute_primal();
            }
        }
        Ok(())
    }

    /// Primal simplex from a primal-feasible basis with the given costs.
    fn primal(&mut self, cost: &dyn Fn(usize) -> f64) -> Result<LpStatus> {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.call_iterations >= self.iteration_limit {
                return Ok(LpStatus::IterationLimit);
            }
            let y = self.duals(cost);
            // pricing
            let mut enter: Option<(usize, f64)> = None; // (var, reduced cost)
            for j in 0..self.total {
                if self.pos[j] != usize::MAX || self.is_fixed(j) {
                    continue;
                }
                let d = cost(j) - self.col_dot(j, &y);
                let can_up = !(self.upper[j].is_finite() && self.x[j] >= self.upper[j] - FEAS_TOL);
                let can_down = !(self.lower[j].is_finite() && self.x[j] <= self.lower[j] + FEAS_TOL);
                let eligible = (d > OPT_TOL && can_up) || (d < -OPT_TOL && can_down);
                if !eligible {
                    continue;
                }
                if bland {
                    enter = Some((j, d));
                    break;
                }
                if enter.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                    enter = Some((j, d));
                }
            }
            let Some((q, dq)) = enter else {
                return Ok(LpStatus::Optimal);
            };
            let dir = if dq > 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);

            // ratio test; basic p moves by -dir * alpha[p] * t
            let own = self.upper[q] - self.lower[q];
            let mut best_t = if own.is_finite() { own } else { f64::INFINITY };
            let mut leave: Option<usize> = None;
            if bland {
                for p in 0..self.m {
                    if let Some(t) = self.ratio(p, -dir * alpha[p], 0.0) {
                        let better = t < best_t - 1e-12
                            || (t <= best_t + 1e-12
                                && leave.is_some_and(|lp: usize| self.basis[p] < self.basis[lp]));
                        if better {
                            best_t = t;
                            leave = Some(p);
                        }
                    }
                }
            } else {
                // Harris two-pass
                let mut relaxed = best_t;
                for p in 0..self.m {
                    if let Some(t) = self.ratio(p, -dir * alpha[p], FEAS_TOL) {
                        relaxed = relaxed.min(t);
                    }
                }
                let mut best_piv = 0.0;
                for p in 0..self.m {
                    if let Some(t) = self.ratio(p, -dir * alpha[p], 0.0) {
                        if t <= relaxed && alpha[p].abs() > best_piv {
                            best_piv = alpha[p].abs();
                            leave = Some(p);
                            best_t = t;
                        }
                    }
                }
                if leave.is_none() && own.is_finite() {
                    best_t = own;
                } else if leave.is_some() && own.is_finite() && own <= best_t {
                    leave = None;
                    best_t = own;
                }
            }
            if !best_t.is_finite() {
                return Ok(LpStatus::Unbounded);
            }
            let t = best_t.max(0.0);
            self.iterations += 1;
            self.call_iterations += 1;
            for p in 0..self.m {
                let j = self.basis[p];
                self.x[j] -= dir * alpha[p] * t;
            }
            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.x[q] = self.upper[q];
                        self.at_upper[q] = true;
                    } else {
                        self.x[q] = self.lower[q];
                        self.at_upper[q] = false;
                    }
                }
                Some(p) => {
                    self.x[q] += dir * t;
                    self.pivot(q, p, &alpha)?;
                }
            }
            if t * dq.abs() <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_SWITCH {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
    }

    /// Step length at which basic position `p` hits a bound when it moves at
    /// rate `rate` per unit step, with bounds relaxed by `tol`.
    fn ratio(&self, p: usize, rate: f64, tol: f64) -> Option<f64> {
        let j = self.basis[p];
        let xj = self.x[j];
        if rate < -PIVOT_TOL {
            let l = self.lower[j];
            l.is_finite().then(|| ((xj - l + tol) / -rate).max(0.0))
        } else if rate > PIVOT_TOL {
            let u = self.upper[j];
            u.is_finite().then(|| ((u + tol - xj) / rate).max(0.0))
        } else {
            None
        }
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot {
            basis: self.basis.clone(),
            at_upper: self.at_upper.clone(),
        }
    }

    /// Install a basis saved by [`Self::snapshot`]; bounds may have changed since.
    pub fn restore(&mut self, snap: &BasisSnapshot) -> Result<()> {
        if self.basis == snap.basis && self.at_upper == snap.at_upper {
            for j in 0..self.total {
                if self.pos[j] == usize::MAX {
                    self.place_nonbasic(j);
                }
            }
            self.recompute_primal();
            return Ok(());
        }
        self.basis.clone_from(&snap.basis);
        self.at_upper.clone_from(&snap.at_upper);
        self.pos.iter_mut().for_each(|p| *p = usize::MAX);
        for (p, &j) in self.basis.iter().enumerate() {
            self.pos[j] = p;
        }
        for j in 0..self.total {
            if self.pos[j] == usize::MAX {
                self.place_nonbasic(j);
            }
        }
        self.refactor()?;
        self.recompute_primal();
        Ok(())
    }

    /// Re-optimise after bound changes, starting from the current basis.
    pub fn resolve(&mut self) -> Result<LpStatus> {
        self.call_iterations = 0;
        if self.basis.is_empty() {
            return self.solve();
        }
        for j in 0..self.total {
            if self.pos[j] == usize::MAX {
                self.place_nonbasic(j);
            }
        }
        self.recompute_primal();
        let model = self.model;
        let n = self.n;
        let real = move |j: usize| if j < n { model.cost[j] } else { 0.0 };
        if !self.dual_feasible(&real) {
            return self.solve();
        }
        match self.dual(&real)? {
            LpStatus::Optimal => self.primal(&real),
            other => Ok(other),
        }
    }

    fn dual_feasible(&self, cost: &dyn Fn(usize) -> f64) -> bool {
        let y = self.duals(cost);
        (0..self.total).all(|j| {
            if self.pos[j] != usize::MAX || self.is_fixed(j) {
                return true;
            }
            let d = cost(j) - self.col_dot(j, &y);
            let lo_fin = self.lower[j].is_finite();
            let up_fin = self.upper[j].is_finite();
            if !lo_fin && !up_fin {
                d.abs() <= 1e-7
            } else if self.at_upper[j] {
                d >= -1e-7
            } else {
                d <= 1e-7
            }
        })
    }

    /// Dual simplex: keeps dual feasibility and removes primal infeasibility.
    fn dual(&mut self, cost: &dyn Fn(usize) -> f64) -> Result<LpStatus> {
        loop {
            if self.call_iterations >= self.iteration_limit {
                return Ok(LpStatus::IterationLimit);
            }
            // leaving row: largest bound violation
            let mut leave: Option<(usize, f64)> = None;
            for p in 0..self.m {
                let j = self.basis[p];
                let v = (self.lower[j] - self.x[j]).max(self.x[j] - self.upper[j]);
                if v > FEAS_TOL && leave.is_none_or(|(_, bv)| v > bv) {
                    leave = Some((p, v));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(LpStatus::Optimal);
            };
            let jr = self.basis[r];
            let increase = self.x[jr] < self.lower[jr];
            let target = if increase { self.lower[jr] } else { self.upper[jr] };
            let rho = self.binv_row(r).to_vec();
            let y = self.duals(cost);

            // entering candidates: x_r moves by -alpha_rj * dx_j
            let mut cands: Vec<(usize, f64, f64)> = Vec::new(); // (var, alpha, ratio)
            for j in 0..self.total {
                if self.pos[j] != usize::MAX || self.is_fixed(j) {
                    continue;
                }
                let a = self.col_dot(j, &rho);
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let free = !self.lower[j].is_finite() && !self.upper[j].is_finite();
                // sign of dx_j that moves x_r the right way
                let want_dx_pos = if increase { a < 0.0 } else { a > 0.0 };
                let ok = free || (want_dx_pos && !self.at_upper[j]) || (!want_dx_pos && self.at_upper[j]);
                if !ok {
                    continue;
                }
                let d = cost(j) - self.col_dot(j, &y);
                cands.push((j, a, d.abs() / a.abs()));
            }
            if cands.is_empty() {
                return Ok(LpStatus::Infeasible);
            }
            // Harris: relaxed minimum ratio, then largest pivot among those within it
            let relaxed = cands
                .iter()
                .map(|&(_, a, t)| t + 1e-9 / a.abs())
                .fold(f64::INFINITY, f64::min);
            let &(q, aq, _) = cands
                .iter()
                .filter(|&&(_, _, t)| t <= relaxed)
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .expect("non-empty");
            let alpha = self.ftran(q);
            let dx = (self.x[jr] - target) / aq;
            self.iterations += 1;
            self.call_iterations += 1;
            for p in 0..self.m {
                let j = self.basis[p];
                self.x[j] -= alpha[p] * dx;
            }
            self.x[q] += dx;
            self.x[jr] = target;
            self.pivot(q, r, &alpha)?;
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting; `None` when singular.
fn invert_dense(a: &mut [f64], k: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; k * k];
    for i in 0..k {
        inv[i * k + i] = 1.0;
    }
    for c in 0..k {
        let (piv_row, piv_val) = (c..k)
            .map(|r| (r, a[r * k + c].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if piv_val < 1e-11 {
            return None;
        }
        if piv_row != c {
            for col in 0..k {
                a.swap(c * k + col, piv_row * k + col);
                inv.swap(c * k + col, piv_row * k + col);
            }
        }
        let p = a[c * k + c];
        for col in 0..k {
            a[c * k + col] /= p;
            inv[c * k + col] /= p;
        }
        for r in 0..k {
            if r == c {
                continue;
            }
            let f = a[r * k + c];
            if f == 0.0 {
                continue;
            }
            for col in 0..k {
                a[r * k + col] -= f * a[c * k + col];
                inv[r * k + col] -= f * inv[c * k + col];
            }
        }
    }
    Some(inv)
}

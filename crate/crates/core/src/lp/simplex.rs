//! Bounded primal revised simplex.
//!
//! Every row `a_i x (rel) b_i` gets a logical column so that `A x + s = b`,
//! with `s_i` in `[0, inf)` for `<=`, `(-inf, 0]` for `>=` and `[0, 0]` for
//! `=`. Structural columns are `[0, inf)` or free. Every finite bound is zero,
//! so nonbasic variables always sit at zero and `x_B = B^-1 b`.
//!
//! Rows whose starting logical would be infeasible get an artificial column;
//! phase one minimises their sum. Pricing is Dantzig's rule with a Harris
//! ratio test; after a run of degenerate pivots the solver switches to
//! Bland's rule until the objective moves again.

use super::lu::{LuFactors, SparseCol};
use super::{BasisEntry, LpError, LpModel, LpSolution, LpSolver, LpStatus, Relation, RowId, Sense, Tolerances, VarBound, VarId};

const REFACTOR_EVERY: usize = 96;
const DEGENERATE_RUN: usize = 40;
const PIVOT_TOL: f64 = 1e-9;
const NONE: usize = usize::MAX;

/// Built-in dense-vector, sparse-factor revised simplex.
#[derive(Debug, Clone, Default)]
pub struct RevisedSimplex {
    /// Overrides the default iteration cap of `50 (m + n) + 10_000`.
    pub max_iterations: Option<usize>,
}

impl RevisedSimplex {
    fn cap(&self, model: &LpModel) -> usize {
        self.max_iterations
            .unwrap_or(50 * (model.rows.len() + model.vars.len()) + 10_000)
    }
}

impl LpSolver for RevisedSimplex {
    fn solve(&self, model: &LpModel, tol: Tolerances) -> Result<LpSolution, LpError> {
        model.validate()?;
        State::new(model, tol).run(self.cap(model))
    }

    /// Starts from `hint` (completed with logicals and repaired if
    /// singular). An infeasible start is cleaned up by minimising the sum of
    /// bound violations; any failure falls back to a cold start.
    fn solve_from(&self, model: &LpModel, tol: Tolerances, hint: &[BasisEntry]) -> Result<LpSolution, LpError> {
        model.validate()?;
        if let Ok(sol) = State::warm(model, tol, hint).run(self.cap(model)) {
            if sol.status == LpStatus::Optimal {
                return Ok(sol);
            }
        }
        self.solve(model, tol)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Minimise the artificials.
    One,
    /// Minimise the sum of bound violations of the basic variables.
    Violations,
    Two,
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct State<'a> {
    model: &'a LpModel,
    tol: Tolerances,
    m: usize,
    n: usize,
    // structural columns, CSC
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    // artificial k sits in row art_row[k] with sign art_sign[k]
    art_row: Vec<usize>,
    art_sign: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    slot_of: Vec<usize>,
    xb: Vec<f64>,
    lu: LuFactors,
    work: Vec<f64>,
    iterations: usize,
    warm: bool,
}

impl<'a> State<'a> {
    fn new(model: &'a LpModel, tol: Tolerances) -> Self {
        let m = model.rows.len();
        let n = model.vars.len();
        let mut counts = vec![0usize; n + 1];
        for row in &model.rows {
            for &(v, _) in &row.coeffs {
                counts[v.0 + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let mut fill = counts;
        let nnz = col_start[n];
        let mut col_row = vec![0; nnz];
        let mut col_val = vec![0.0; nnz];
        for (i, row) in model.rows.iter().enumerate() {
            for &(v, a) in &row.coeffs {
                let p = fill[v.0];
                col_row[p] = i;
                col_val[p] = a;
                fill[v.0] += 1;
            }
        }

        let mut lower = Vec::with_capacity(n + 2 * m);
        let mut upper = Vec::with_capacity(n + 2 * m);
        for var in &model.vars {
            match var.bound {
                VarBound::NonNegative => lower.push(0.0),
                VarBound::Free => lower.push(f64::NEG_INFINITY),
            }
            upper.push(f64::INFINITY);
        }
        let b: Vec<f64> = model.rows.iter().map(|r| r.rhs).collect();
        let mut basis = Vec::with_capacity(m);
        let mut art_row = Vec::new();
        let mut art_sign = Vec::new();
        for (i, row) in model.rows.iter().enumerate() {
            let (lo, hi) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            if b[i] >= lo && b[i] <= hi {
                basis.push(n + i);
            } else {
                art_row.push(i);
                art_sign.push(if b[i] > 0.0 { 1.0 } else { -1.0 });
                basis.push(NONE);
            }
        }
        for (k, &i) in art_row.iter().enumerate() {
            basis[i] = n + m + k;
            lower.push(0.0);
            upper.push(f64::INFINITY);
        }
        let total = n + m + art_row.len();
        let mut slot_of = vec![NONE; total];
        for (r, &j) in basis.iter().enumerate() {
            slot_of[j] = r;
        }

        State {
            model,
            tol,
            m,
            n,
            col_start,
            col_row,
            col_val,
            art_row,
            art_sign,
            lower,
            upper,
            cost: vec![0.0; total],
            b,
            basis,
            slot_of,
            xb: vec![0.0; m],
            lu: LuFactors::default(),
            work: vec![0.0; m],
            iterations: 0,
            warm: false,
        }
    }

    /// State whose basis is `hint`, padded with logicals; no artificials.
    fn warm(model: &'a LpModel, tol: Tolerances, hint: &[BasisEntry]) -> Self {
        let mut st = State::new(model, tol);
        let (n, m) = (st.n, st.m);
        st.lower.truncate(n + m);
        st.upper.truncate(n + m);
        st.art_row.clear();
        st.art_sign.clear();
        st.slot_of = vec![NONE; n + m];
        let mut chosen = Vec::with_capacity(m);
        for e in hint {
            let j = match *e {
                BasisEntry::Var(VarId(v)) if v < n => v,
                BasisEntry::Row(RowId(r)) if r < m => n + r,
                _ => continue,
            };
            if st.slot_of[j] == NONE && chosen.len() < m {
                st.slot_of[j] = chosen.len();
                chosen.push(j);
            }
        }
        let mut row = 0;
        while chosen.len() < m {
            while st.slot_of[n + row] != NONE {
                row += 1;
            }
            st.slot_of[n + row] = chosen.len();
            chosen.push(n + row);
        }
        st.basis = chosen;
        st.cost.truncate(n + m);
        st.warm = true;
        st
    }

    fn total(&self) -> usize {
        self.lower.len()
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n + self.m
    }

    fn column(&self, j: usize) -> SparseCol {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|p| (self.col_row[p], self.col_val[p]))
                .collect()
        } else if j < self.n + self.m {
            vec![(j - self.n, 1.0)]
        } else {
            let k = j - self.n - self.m;
            vec![(self.art_row[k], self.art_sign[k])]
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|p| self.col_val[p] * y[self.col_row[p]])
                .sum()
        } else if j < self.n + self.m {
            y[j - self.n]
        } else {
            let k = j - self.n - self.m;
            self.art_sign[k] * y[self.art_row[k]]
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        for _ in 0..4 {
            let cols: Vec<SparseCol> = self.basis.iter().map(|&j| self.column(j)).collect();
            match LuFactors::factor(self.m, &cols) {
                Ok(lu) => {
                    self.lu = lu;
                    let mut x = self.b.clone();
                    self.lu.ftran(&mut x, &mut self.work);
                    self.xb = x;
                    return Ok(());
                }
                Err(singular) => {
                    for (slot, row) in singular.replacements {
                        let out = self.basis[slot];
                        self.slot_of[out] = NONE;
                        let logical = self.n + row;
                        self.basis[slot] = logical;
                        self.slot_of[logical] = slot;
                    }
                }
            }
        }
        Err(LpError::Numerical("basis stays singular after repair".into()))
    }

    fn duals(&mut self) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        self.lu.btran(&mut y, &mut self.work);
        y
    }

    fn ftran_column(&mut self, j: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.m];
        for (i, a) in self.column(j) {
            d[i] += a;
        }
        self.lu.ftran(&mut d, &mut self.work);
        d
    }

    /// Entering variable and direction (+1 increase, -1 decrease).
    fn price(&self, y: &[f64], bland: bool) -> Option<(usize, f64)> {
        let tol = self.tol.opt;
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.total() {
            if self.slot_of[j] != NONE || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.cost[j] - self.dot_column(j, y);
            let dir = if d < -tol && self.upper[j] > 0.0 {
                1.0
            } else if d > tol && self.lower[j] < 0.0 {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Leaving slot and step length for entering direction `dir * alpha`.
    fn ratio_test(&self, alpha: &[f64], dir: f64, bland: bool, phase: Phase) -> Option<(usize, f64)> {
        let feas = self.tol.feas;
        let ratio = |r: usize, slack: f64| -> Option<f64> {
            let delta = -dir * alpha[r];
            if delta.abs() <= PIVOT_TOL {
                return None;
            }
            let j = self.basis[r];
            let x = self.xb[r];
            if phase == Phase::Violations {
                // violated bounds block only when approached
                if x < self.lower[j] - feas {
                    return (delta > 0.0).then(|| (self.lower[j] - x) / delta);
                }
                if x > self.upper[j] + feas {
                    return (delta < 0.0).then(|| (x - self.upper[j]) / -delta);
                }
            }
            if delta < 0.0 && self.lower[j].is_finite() {
                Some(((x - self.lower[j] + slack) / -delta).max(0.0))
            } else if delta > 0.0 && self.upper[j].is_finite() {
                Some(((self.upper[j] - x + slack) / delta).max(0.0))
            } else {
                None
            }
        };

        if bland {
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.m {
                if let Some(t) = ratio(r, 0.0) {
                    best = match best {
                        None => Some((r, t)),
                        Some((br, bt)) => {
                            if t < bt - 1e-12
                                || (t <= bt + 1e-12 && self.basis[r] < self.basis[br])
                            {
                                Some((r, t))
                            } else {
                                Some((br, bt))
                            }
                        }
                    }
                }
            }
            return best;
        }

        let mut t_max = f64::INFINITY;
        for r in 0..self.m {
            if let Some(t) = ratio(r, feas) {
                t_max = t_max.min(t);
            }
        }
        if !t_max.is_finite() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut best_abs = 0.0;
        for r in 0..self.m {
            if let Some(t) = ratio(r, 0.0) {
                if t <= t_max {
                    let a = alpha[r].abs();
                    let better = match best {
                        None => true,
                        Some((br, _)) => {
                            a > best_abs || (a == best_abs && self.basis[r] < self.basis[br])
                        }
                    };
                    if better {
                        best = Some((r, t));
                        best_abs = a;
                    }
                }
            }
        }
        best
    }

    fn pivot(&mut self, enter: usize, slot: usize, alpha: &[f64], step: f64, dir: f64) {
        for r in 0..self.m {
            if alpha[r] != 0.0 {
                self.xb[r] -= step * dir * alpha[r];
            }
        }
        let leave = self.basis[slot];
        self.slot_of[leave] = NONE;
        self.basis[slot] = enter;
        self.slot_of[enter] = slot;
        self.xb[slot] = dir * step;
        self.lu.push_eta(slot, alpha);
    }

    fn run_phase(&mut self, phase: Phase, cap: usize) -> Result<Outcome, LpError> {
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut confirmed = false;
        loop {
            if self.iterations >= cap {
                return Err(LpError::IterationLimit(cap));
            }
            if self.lu.eta_count() >= REFACTOR_EVERY {
                self.refactor()?;
            }
            if phase == Phase::Violations && !self.set_violation_costs() {
                return Ok(Outcome::Optimal);
            }
            let y = self.duals();
            let Some((enter, dir)) = self.price(&y, bland) else {
                if self.lu.eta_count() > 0 && !confirmed {
                    // re-check against a fresh factorisation
                    self.refactor()?;
                    confirmed = true;
                    continue;
                }
                return Ok(Outcome::Optimal);
            };
            confirmed = false;
            self.iterations += 1;
            let alpha = self.ftran_column(enter);
            let Some((slot, step)) = self.ratio_test(&alpha, dir, bland, phase) else {
                if phase != Phase::Two {
                    return Err(LpError::Numerical("unbounded phase-one ray".into()));
                }
                return Ok(Outcome::Unbounded);
            };
            if step <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            self.pivot(enter, slot, &alpha, step, dir);
        }
    }

    fn export_basis(&self) -> Vec<BasisEntry> {
        self.basis
            .iter()
            .filter_map(|&j| {
                if j < self.n {
                    Some(BasisEntry::Var(VarId(j)))
                } else if j < self.n + self.m {
                    Some(BasisEntry::Row(RowId(j - self.n)))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Unit costs pushing violated basics back inside their bounds; false
    /// when the basis is feasible.
    fn set_violation_costs(&mut self) -> bool {
        let feas = self.tol.feas;
        let mut any = false;
        for (r, &j) in self.basis.iter().enumerate() {
            let x = self.xb[r];
            self.cost[j] = if x < self.lower[j] - feas {
                any = true;
                -1.0
            } else if x > self.upper[j] + feas {
                any = true;
                1.0
            } else {
                0.0
            };
        }
        any
    }

    fn infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(&j, _)| self.is_artificial(j))
            .map(|(_, &x)| x.max(0.0))
            .sum()
    }

    // Pivot zero-level artificials out of the basis where some other column
    // can take their slot; rows where none can are redundant.
    fn drive_out_artificials(&mut self) {
        for slot in 0..self.m {
            if !self.is_artificial(self.basis[slot]) {
                continue;
            }
            let mut e = vec![0.0; self.m];
            e[slot] = 1.0;
            self.lu.btran(&mut e, &mut self.work);
            let mut best = NONE;
            let mut best_abs = 1e-7;
            for j in 0..self.n + self.m {
                if self.slot_of[j] != NONE {
                    continue;
                }
                let a = self.dot_column(j, &e).abs();
                if a > best_abs {
                    best_abs = a;
                    best = j;
                }
            }
            if best != NONE {
                let alpha = self.ftran_column(best);
                self.pivot(best, slot, &alpha, 0.0, 1.0);
                if self.lu.eta_count() >= REFACTOR_EVERY {
                    // factorisation only fails on a singular basis, which the
                    // pivot tolerance above rules out
                    let _ = self.refactor();
                }
            }
        }
    }

    fn run(&mut self, cap: usize) -> Result<LpSolution, LpError> {
        self.refactor()?;
        let infeasible = LpSolution {
            status: LpStatus::Infeasible,
            primal: Vec::new(),
            dual: Vec::new(),
            objective: f64::NAN,
            dual_objective: f64::NAN,
            primal_residual: f64::NAN,
            iterations: 0,
            basis: Vec::new(),
        };

        if self.warm {
            self.run_phase(Phase::Violations, cap)?;
            if self.set_violation_costs() {
                return Err(LpError::Numerical("warm start stayed infeasible".into()));
            }
            self.cost.iter_mut().for_each(|c| *c = 0.0);
        } else if !self.art_row.is_empty() {
            for j in self.n + self.m..self.total() {
                self.cost[j] = 1.0;
            }
            self.run_phase(Phase::One, cap)?;
            let scale = 1.0 + self.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            if self.infeasibility() > self.tol.feas * scale {
                return Ok(LpSolution {
                    iterations: self.iterations,
                    ..infeasible
                });
            }
            self.drive_out_artificials();
            for j in self.n + self.m..self.total() {
                self.cost[j] = 0.0;
                self.upper[j] = 0.0;
            }
            self.refactor()?;
        }

        let sign = match self.model.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for (j, var) in self.model.vars.iter().enumerate() {
            self.cost[j] = sign * var.cost;
        }
        match self.run_phase(Phase::Two, cap)? {
            Outcome::Unbounded => Ok(LpSolution {
                status: LpStatus::Unbounded,
                iterations: self.iterations,
                ..infeasible
            }),
            Outcome::Optimal => {
                let mut primal = vec![0.0; self.n];
                for (r, &j) in self.basis.iter().enumerate() {
                    if j < self.n {
                        primal[j] = self.xb[r];
                    }
                }
                for (x, var) in primal.iter_mut().zip(&self.model.vars) {
                    if var.bound == VarBound::NonNegative && *x < 0.0 && *x > -self.tol.feas {
                        *x = 0.0;
                    }
                }
                let y = self.duals();
                let dual: Vec<f64> = y.iter().map(|&v| sign * v).collect();
                let objective = self
                    .model
                    .vars
                    .iter()
                    .zip(&primal)
                    .map(|(v, &x)| v.cost * x)
                    .sum();
                let dual_objective = self.b.iter().zip(&dual).map(|(b, d)| b * d).sum();
                let primal_residual = self.model.primal_residual(&primal);
                if primal_residual > 1e3 * self.tol.feas.max(1e-9) {
                    return Err(LpError::Numerical(format!(
                        "primal residual {primal_residual:e} after optimal termination"
                    )));
                }
                Ok(LpSolution {
                    status: LpStatus::Optimal,
                    primal,
                    dual,
                    objective,
                    dual_objective,
                    primal_residual,
                    iterations: self.iterations,
                    basis: self.export_basis(),
                })
            }
        }
    }
}

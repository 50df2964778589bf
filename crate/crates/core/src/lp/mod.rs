//! Linear-program models and the solver contract used by the restricted-game
//! builders.
//!
//! Variables are either nonnegative or free; constraints are `<=`, `=` or `>=`
//! rows over sparse coefficients. [`RevisedSimplex`] is the built-in backend.

mod lu;
mod simplex;

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

pub use simplex::RevisedSimplex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarBound {
    NonNegative,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub bound: VarBound,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LpModel {
    pub sense: Sense,
    pub vars: Vec<Variable>,
    pub rows: Vec<Constraint>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver tolerances. Both default to 1e-9.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feas: f64,
    pub opt: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas: 1e-9,
            opt: 1e-9,
        }
    }
}

/// Result of a solve. `primal` and `dual` are empty unless the status is
/// [`LpStatus::Optimal`].
///
/// `dual[i]` is the shadow price of row `i` in the model's own sense: the
/// rate of change of the optimal objective per unit increase of its right-hand
/// side.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    /// Largest violation of a row or a variable bound.
    pub primal_residual: f64,
    pub iterations: usize,
    /// Final basis, artificials excluded; empty when not optimal.
    pub basis: Vec<BasisEntry>,
}

impl LpSolution {
    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }

    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs()
    }
}

/// A basic column: a structural variable or the logical of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisEntry {
    Var(VarId),
    Row(RowId),
}

/// Swappable LP backend.
pub trait LpSolver {
    fn solve(&self, model: &LpModel, tol: Tolerances) -> Result<LpSolution, LpError>;

    /// Solve starting from a suggested basis. Backends without warm starts
    /// ignore the hint.
    fn solve_from(&self, model: &LpModel, tol: Tolerances, hint: &[BasisEntry]) -> Result<LpSolution, LpError> {
        let _ = hint;
        self.solve(model, tol)
    }
}

impl LpModel {
    pub fn new(sense: Sense) -> Self {
        LpModel {
            sense,
            vars: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, bound: VarBound, cost: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            bound,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> RowId {
        self.rows.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for v in &self.vars {
            if !v.cost.is_finite() {
                return Err(LpError::InvalidModel(format!(
                    "objective coefficient of `{}` is not finite",
                    v.name
                )));
            }
        }
        for row in &self.rows {
            if !row.rhs.is_finite() {
                return Err(LpError::InvalidModel(format!(
                    "right-hand side of `{}` is not finite",
                    row.name
                )));
            }
            for &(v, a) in &row.coeffs {
                if v.0 >= self.vars.len() {
                    return Err(LpError::InvalidModel(format!(
                        "row `{}` references undeclared variable {}",
                        row.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::InvalidModel(format!(
                        "row `{}` has a non-finite coefficient",
                        row.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Row activity `a_i . x` for every row.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(v, a)| a * x[v.0]).sum())
            .collect()
    }

    /// Largest violation of any row or variable bound at `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, act) in self.rows.iter().zip(self.activities(x)) {
            let viol = match row.relation {
                Relation::Le => act - row.rhs,
                Relation::Ge => row.rhs - act,
                Relation::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (var, &xv) in self.vars.iter().zip(x) {
            if var.bound == VarBound::NonNegative {
                worst = worst.max(-xv);
            }
        }
        worst
    }

    /// `c_j - a_j . y` for every variable, with `y` the row shadow prices.
    /// At a minimisation optimum these are nonnegative on nonnegative
    /// variables and zero on free ones.
    pub fn reduced_costs(&self, dual: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = self.vars.iter().map(|v| v.cost).collect();
        for (row, &y) in self.rows.iter().zip(dual) {
            if y != 0.0 {
                for &(v, a) in &row.coeffs {
                    d[v.0] -= a * y;
                }
            }
        }
        d
    }

    /// Copy without the variables not flagged in `keep`; returns the new
    /// model and the old-to-new variable map.
    pub fn restrict(&self, keep: &[bool]) -> (LpModel, Vec<Option<VarId>>) {
        let mut out = LpModel::new(self.sense);
        let map: Vec<Option<VarId>> = self
            .vars
            .iter()
            .zip(keep)
            .map(|(v, &k)| k.then(|| out.add_var(v.name.clone(), v.bound, v.cost)))
            .collect();
        for row in &self.rows {
            let coeffs = row
                .coeffs
                .iter()
                .filter_map(|&(v, a)| map[v.0].map(|nv| (nv, a)))
                .collect();
            out.add_row(row.name.clone(), coeffs, row.relation, row.rhs);
        }
        (out, map)
    }

    /// Basis entries keyed by variable/row name, for carrying a basis over to
    /// a related model.
    pub fn basis_names(&self, basis: &[BasisEntry]) -> Vec<(bool, String)> {
        basis
            .iter()
            .map(|&e| match e {
                BasisEntry::Var(v) => (true, self.vars[v.0].name.clone()),
                BasisEntry::Row(r) => (false, self.rows[r.0].name.clone()),
            })
            .collect()
    }

    /// Inverse of [`LpModel::basis_names`]; names missing here are dropped.
    pub fn basis_from_names(&self, names: &[(bool, String)]) -> Vec<BasisEntry> {
        let vars: HashMap<&str, usize> = self.vars.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect();
        let rows: HashMap<&str, usize> = self.rows.iter().enumerate().map(|(i, r)| (r.name.as_str(), i)).collect();
        names
            .iter()
            .filter_map(|(is_var, name)| {
                if *is_var {
                    vars.get(name.as_str()).map(|&i| BasisEntry::Var(VarId(i)))
                } else {
                    rows.get(name.as_str()).map(|&i| BasisEntry::Row(RowId(i)))
                }
            })
            .collect()
    }

    /// The model in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        fn clean(name: &str) -> String {
            name.chars()
                .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
                .collect()
        }
        fn term(out: &mut String, first: bool, a: f64, name: &str) {
            if a < 0.0 {
                let _ = write!(out, " - {} {}", -a, name);
            } else if first {
                let _ = write!(out, " {} {}", a, name);
            } else {
                let _ = write!(out, " + {} {}", a, name);
            }
        }
        let names: Vec<String> = self
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| format!("x{}_{}", i, clean(&v.name)))
            .collect();
        let mut out = String::new();
        out.push_str(match self.sense {
            Sense::Minimize => "Minimize\n obj:",
            Sense::Maximize => "Maximize\n obj:",
        });
        let mut first = true;
        for (i, v) in self.vars.iter().enumerate() {
            if v.cost != 0.0 {
                term(&mut out, first, v.cost, &names[i]);
                first = false;
            }
        }
        if first {
            let _ = write!(out, " 0 {}", names.first().map(String::as_str).unwrap_or("x"));
        }
        out.push_str("\nSubject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " c{}_{}:", i, clean(&row.name));
            if row.coeffs.is_empty() {
                let _ = write!(out, " 0 {}", names.first().map(String::as_str).unwrap_or("x"));
            }
            for (k, &(v, a)) in row.coeffs.iter().enumerate() {
                term(&mut out, k == 0, a, &names[v.0]);
            }
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {} {}", rel, row.rhs);
        }
        out.push_str("Bounds\n");
        for (i, v) in self.vars.iter().enumerate() {
            if v.bound == VarBound::Free {
                let _ = writeln!(out, " {} free", names[i]);
            }
        }
        out.push_str("End\n");
        out
    }
}

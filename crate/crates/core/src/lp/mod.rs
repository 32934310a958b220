//! Sparse bounded-variable linear programs and their solvers.
//!
//! Problems are always maximizations. Every variable has a finite lower bound
//! and a (possibly infinite) upper bound; general constraints are sparse rows
//! with a relation and a right-hand side.
//!
//! Before reaching a backend, [`solve_with`] eliminates fixed variables and
//! splits the problem into independent blocks (connected components of the
//! row/variable incidence graph). Each block is solved on its own, so a
//! block-diagonal problem yields exactly the per-block solutions.

mod dump;
mod presolve;
mod simplex;
mod sparse;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use dump::dump;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Eq => "=",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Eq => (lhs - self.rhs).abs(),
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    Malformed(String),
    #[error("iteration limit of {limit} exceeded")]
    IterationLimit { limit: usize },
    #[error("unknown solver backend {0:?} (expected \"reference\" or \"sparse\")")]
    UnknownBackend(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("solution is not optimal ({0:?})")]
    NotOptimal(LpStatus),
}

/// A maximization LP with bounded variables and sparse rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpProblem {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
    rows: Vec<Row>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, objective: f64) -> usize {
        self.objective.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, relation, rhs });
        self.rows.len() - 1
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn var_name(&self, var: usize) -> &str {
        &self.names[var]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest bound or row violation of `x`, in the problem's own units.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0));
        let rows = self.rows.iter().map(|r| r.violation(x));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        for j in 0..n {
            let (l, u, c) = (self.lower[j], self.upper[j], self.objective[j]);
            if !l.is_finite() {
                return Err(LpError::Malformed(format!("variable {} has non-finite lower bound {l}", self.names[j])));
            }
            if u.is_nan() || u < l {
                return Err(LpError::Malformed(format!(
                    "variable {} has bounds [{l}, {u}]",
                    self.names[j]
                )));
            }
            if !c.is_finite() {
                return Err(LpError::Malformed(format!("variable {} has objective {c}", self.names[j])));
            }
        }
        let mut seen = vec![usize::MAX; n];
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has rhs {}", row.rhs)));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Malformed(format!("row {i} references variable {j} of {n}")));
                }
                if seen[j] == i {
                    return Err(LpError::Malformed(format!("row {i} repeats variable {}", self.names[j])));
                }
                seen[j] = i;
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has coefficient {a}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point; meaningful only when `status` is optimal.
    pub x: Vec<f64>,
    pub objective_value: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Primal feasibility tolerance on equilibrated rows.
    pub tol_feas: f64,
    /// Reduced-cost optimality tolerance.
    pub tol_pivot: f64,
    /// Overrides the default cap of `50 * (n_vars + n_rows)` iterations.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_feas: 1e-7,
            tol_pivot: 1e-9,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Two-phase bounded-variable revised simplex implemented in this crate.
    #[default]
    Reference,
    /// Sparse-LU simplex from the `microlp` crate; faster on large pools.
    Sparse,
}

impl FromStr for Backend {
    type Err = LpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(Backend::Reference),
            "sparse" | "microlp" => Ok(Backend::Sparse),
            other => Err(LpError::UnknownBackend(other.to_string())),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Reference => "reference",
            Backend::Sparse => "sparse",
        })
    }
}

/// Solves with the reference simplex.
pub fn solve(problem: &LpProblem, options: &SolverOptions) -> Result<LpSolution, LpError> {
    solve_with(problem, Backend::Reference, options)
}

pub fn solve_with(problem: &LpProblem, backend: Backend, options: &SolverOptions) -> Result<LpSolution, LpError> {
    problem.validate()?;
    presolve::solve_decomposed(problem, options, |block| match backend {
        Backend::Reference => simplex::solve(block, options).map(|o| o.solution),
        Backend::Sparse => sparse::solve(block),
    })
}

/// Resolves a backend by name, then solves.
pub fn solve_named(problem: &LpProblem, backend: &str, options: &SolverOptions) -> Result<LpSolution, LpError> {
    solve_with(problem, backend.parse()?, options)
}

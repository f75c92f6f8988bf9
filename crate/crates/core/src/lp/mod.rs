//! Exact solver kernel: a bounded-variable primal simplex plus branch and
//! bound over binary variables.
//!
//! Models are stated in maximization form. Every variable carries explicit
//! bounds (finite lower, possibly infinite upper) which the simplex handles
//! implicitly rather than as constraint rows; the scheduling models built on
//! top are bound-dominated, so this keeps the basis small.

mod branch;
mod dump;
mod simplex;

pub use branch::{solve_mip, solve_mip_with_limit, MipError, MipSolution};
pub use dump::to_lp_text;
pub use simplex::{solve_lp, LpError, LpSolution};

use thiserror::Error;

/// Solver tolerances, kept in one place.
pub mod tol {
    /// Absolute per-row primal feasibility tolerance.
    pub const FEASIBILITY: f64 = 1e-8;
    /// A value within this distance of an integer counts as integral.
    pub const INTEGRALITY: f64 = 1e-9;
    /// Minimum improvement for objective comparisons (reduced costs,
    /// incumbent updates).
    pub const OBJECTIVE_CMP: f64 = 1e-9;
    /// Default relative MIP gap at which branch and bound stops.
    pub const DEFAULT_MIP_GAP: f64 = 1e-3;
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub const STALL_PIVOTS: usize = 50;
    /// Variables whose bound range is below this are treated as fixed.
    pub const FIXED_RANGE: f64 = 1e-12;
    /// Default cap on explored branch-and-bound nodes.
    pub const DEFAULT_NODE_LIMIT: usize = 10_000;
    /// Default cap on the number of binary variables per model.
    pub const DEFAULT_BINARY_LIMIT: usize = 64;
}

/// Relation of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Eq,
    Ge,
}

impl Rel {
    fn symbol(self) -> &'static str {
        match self {
            Rel::Le => "<=",
            Rel::Eq => "=",
            Rel::Ge => ">=",
        }
    }
}

/// One sparse constraint row: `sum(coeff * x) rel rhs`.
#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Rel,
    pub rhs: f64,
}

/// Termination status shared by LP and MIP solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// A linear program in maximization form with per-variable bounds and an
/// optional set of binary-restricted variables.
#[derive(Debug, Clone, Default)]
pub struct LpModel {
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective: Vec<f64>,
    rows: Vec<Row>,
    binaries: Vec<usize>,
}

/// Structural problems detected before solving.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("variable {var}: {message}")]
    Variable { var: usize, message: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("binary {var}: {message}")]
    Binary { var: usize, message: String },
}

impl LpModel {
    pub fn new() -> Self {
        LpModel::default()
    }

    /// Add a continuous variable with bounds `[lower, upper]` (upper may be
    /// `f64::INFINITY`) and the given objective coefficient. Returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64, objective: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(objective);
        self.lower.len() - 1
    }

    /// Add a binary variable with the given objective coefficient.
    pub fn add_binary(&mut self, objective: f64) -> usize {
        let idx = self.add_var(0.0, 1.0, objective);
        self.binaries.push(idx);
        idx
    }

    /// Add a constraint row. Duplicate variable references are merged.
    pub fn add_row(&mut self, rel: Rel, rhs: f64, coeffs: &[(usize, f64)]) {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for &(var, coef) in coeffs {
            if coef == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(v, _)| *v == var) {
                Some((_, c)) => *c += coef,
                None => merged.push((var, coef)),
            }
        }
        self.rows.push(Row {
            coeffs: merged,
            rel,
            rhs,
        });
    }

    /// Tighten (or fix) the bounds of an existing variable.
    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.lower[var], self.upper[var])
    }

    pub fn objective_coeff(&self, var: usize) -> f64 {
        self.objective[var]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn binaries(&self) -> &[usize] {
        &self.binaries
    }

    /// Structural validation: finite lower bounds, ordered bound pairs,
    /// in-range row indices and binaries restricted to [0, 1].
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.num_vars();
        for var in 0..n {
            let (lo, up) = (self.lower[var], self.upper[var]);
            if !lo.is_finite() {
                return Err(ModelError::Variable {
                    var,
                    message: format!("lower bound must be finite, got {lo}"),
                });
            }
            if up.is_nan() || up < lo {
                return Err(ModelError::Variable {
                    var,
                    message: format!("upper bound {up} below lower bound {lo}"),
                });
            }
            if !self.objective[var].is_finite() {
                return Err(ModelError::Variable {
                    var,
                    message: "objective coefficient must be finite".into(),
                });
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(ModelError::Row {
                    row: r,
                    message: format!("rhs must be finite, got {}", row.rhs),
                });
            }
            for &(var, coef) in &row.coeffs {
                if var >= n {
                    return Err(ModelError::Row {
                        row: r,
                        message: format!("references variable {var}, model has {n}"),
                    });
                }
                if !coef.is_finite() {
                    return Err(ModelError::Row {
                        row: r,
                        message: format!("coefficient on variable {var} is not finite"),
                    });
                }
            }
        }
        for &var in &self.binaries {
            if var >= n {
                return Err(ModelError::Binary {
                    var,
                    message: format!("index out of range, model has {n} variables"),
                });
            }
            if self.lower[var] < -tol::INTEGRALITY || self.upper[var] > 1.0 + tol::INTEGRALITY {
                return Err(ModelError::Binary {
                    var,
                    message: format!(
                        "bounds [{}, {}] not within [0, 1]",
                        self.lower[var], self.upper[var]
                    ),
                });
            }
        }
        Ok(())
    }
}

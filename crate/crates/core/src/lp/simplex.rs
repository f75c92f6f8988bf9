//! Two-phase primal simplex with implicit variable bounds.
//!
//! Every row gets one slack column so the initial basis is diagonal; rows
//! whose slack cannot absorb the initial residual get a phase-1 artificial.
//! The basis inverse is kept dense and updated in product form, with periodic
//! refactorization. Dantzig pricing is used until a run of degenerate pivots
//! trips Bland's rule, which guarantees termination.

use super::{tol, LpModel, ModelError, Rel, SolveStatus};
use thiserror::Error;

/// Failures outside the Optimal/Infeasible/Unbounded statuses.
#[derive(Debug, Error)]
pub enum LpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("iteration limit exceeded after {0} pivots")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Result of one LP solve. `values` holds the structural variables only and
/// is empty unless the status is `Optimal`.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Solve the LP relaxation of `model` (binary markers are ignored; their
/// bounds still apply).
pub fn solve_lp(model: &LpModel) -> Result<LpSolution, LpError> {
    model.validate()?;
    let prepared = Prepared::from_model(model);
    let mut lower = Vec::with_capacity(model.num_vars());
    let mut upper = Vec::with_capacity(model.num_vars());
    for v in 0..model.num_vars() {
        let (lo, up) = model.bounds(v);
        lower.push(lo);
        upper.push(up);
    }
    solve_prepared(&prepared, &lower, &upper)
}

/// Column-major form of a model, reusable across many bound settings
/// (branch-and-bound nodes re-solve with tightened binary bounds).
pub(super) struct Prepared {
    pub n: usize,
    pub m: usize,
    /// Structural columns as (row, coefficient) lists.
    cols: Vec<Vec<(usize, f64)>>,
    /// Slack coefficient per row: +1 for <= and =, -1 for >=.
    sigma: Vec<f64>,
    /// Slack upper bound per row: 0 for =, +inf otherwise.
    slack_upper: Vec<f64>,
    rhs: Vec<f64>,
    /// Objective normalized by `obj_scale` so pricing tolerances behave the
    /// same under uniform rescaling of the objective.
    obj: Vec<f64>,
    orig_obj: Vec<f64>,
}

impl Prepared {
    pub(super) fn from_model(model: &LpModel) -> Self {
        let n = model.num_vars();
        let m = model.num_rows();
        let mut cols = vec![Vec::new(); n];
        let mut sigma = Vec::with_capacity(m);
        let mut slack_upper = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        for (r, row) in model.rows().iter().enumerate() {
            for &(var, coef) in &row.coeffs {
                cols[var].push((r, coef));
            }
            sigma.push(match row.rel {
                Rel::Le | Rel::Eq => 1.0,
                Rel::Ge => -1.0,
            });
            slack_upper.push(match row.rel {
                Rel::Eq => 0.0,
                _ => f64::INFINITY,
            });
            rhs.push(row.rhs);
        }
        let orig_obj: Vec<f64> = (0..n).map(|v| model.objective_coeff(v)).collect();
        let scale = orig_obj.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let obj = orig_obj.iter().map(|c| c / scale).collect();
        Prepared {
            n,
            m,
            cols,
            sigma,
            slack_upper,
            rhs,
            obj,
            orig_obj,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VStat {
    Basic,
    AtLower,
    AtUpper,
}

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-10;
const REFACTOR_EVERY: usize = 64;
const PLACEMENT_TOL: f64 = 1e-11;

struct Simplex<'a> {
    p: &'a Prepared,
    lower: Vec<f64>,
    upper: Vec<f64>,
    c: Vec<f64>,
    status: Vec<VStat>,
    basis: Vec<usize>,
    x_b: Vec<f64>,
    binv: Vec<f64>,
    art_rows: Vec<usize>,
    art_signs: Vec<f64>,
    bland: bool,
    stall: usize,
    iterations: usize,
    max_iterations: usize,
}

enum Inner {
    Optimal,
    Unbounded,
}

pub(super) fn solve_prepared(
    p: &Prepared,
    struct_lower: &[f64],
    struct_upper: &[f64],
) -> Result<LpSolution, LpError> {
    let (n, m) = (p.n, p.m);
    let mut lower = struct_lower.to_vec();
    let mut upper = struct_upper.to_vec();
    lower.resize(n + m, 0.0);
    upper.extend_from_slice(&p.slack_upper);

    let mut status = vec![VStat::AtLower; n + m];
    let mut basis = vec![usize::MAX; m];
    let mut x_b = vec![0.0; m];
    let mut binv = vec![0.0; m * m];
    let mut art_rows = Vec::new();
    let mut art_signs = Vec::new();

    // Residuals with all structural variables at their lower bound.
    let mut resid = p.rhs.clone();
    for (j, col) in p.cols.iter().enumerate() {
        let xv = lower[j];
        if xv != 0.0 {
            for &(r, a) in col {
                resid[r] -= a * xv;
            }
        }
    }

    for r in 0..m {
        let s_target = p.sigma[r] * resid[r];
        if s_target >= -PLACEMENT_TOL && s_target <= p.slack_upper[r] + PLACEMENT_TOL {
            basis[r] = n + r;
            x_b[r] = s_target.max(0.0);
            status[n + r] = VStat::Basic;
            binv[r * m + r] = p.sigma[r];
        } else {
            // Slack pinned at zero; an artificial absorbs the residual.
            let k = art_rows.len();
            art_rows.push(r);
            let sign = if resid[r] >= 0.0 { 1.0 } else { -1.0 };
            art_signs.push(sign);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            status.push(VStat::Basic);
            basis[r] = n + m + k;
            x_b[r] = resid[r].abs();
            binv[r * m + r] = sign;
        }
    }

    let total = lower.len();
    let mut sx = Simplex {
        p,
        lower,
        upper,
        c: vec![0.0; total],
        status,
        basis,
        x_b,
        binv,
        art_rows,
        art_signs,
        bland: false,
        stall: 0,
        iterations: 0,
        max_iterations: 20_000 + 200 * m,
    };

    if !sx.art_rows.is_empty() {
        for k in 0..sx.art_rows.len() {
            sx.c[n + m + k] = -1.0;
        }
        match sx.run_phase()? {
            Inner::Optimal => {}
            Inner::Unbounded => {
                return Err(LpError::Numerical(
                    "phase 1 objective reported unbounded".into(),
                ));
            }
        }
        let infeasibility: f64 = (0..sx.art_rows.len())
            .map(|k| sx.var_value(n + m + k).abs())
            .sum();
        if infeasibility > 1e-7 {
            return Ok(LpSolution {
                status: SolveStatus::Infeasible,
                objective: f64::NEG_INFINITY,
                values: Vec::new(),
                iterations: sx.iterations,
            });
        }
        for k in 0..sx.art_rows.len() {
            sx.upper[n + m + k] = 0.0;
            sx.c[n + m + k] = 0.0;
        }
        sx.bland = false;
        sx.stall = 0;
    }

    sx.c[..n].copy_from_slice(&p.obj);
    match sx.run_phase()? {
        Inner::Optimal => {}
        Inner::Unbounded => {
            return Ok(LpSolution {
                status: SolveStatus::Unbounded,
                objective: f64::INFINITY,
                values: Vec::new(),
                iterations: sx.iterations,
            });
        }
    }

    let mut values = vec![0.0; n];
    for (j, value) in values.iter_mut().enumerate() {
        *value = sx.var_value(j);
    }
    let objective = values
        .iter()
        .zip(&p.orig_obj)
        .map(|(x, c)| x * c)
        .sum::<f64>();
    Ok(LpSolution {
        status: SolveStatus::Optimal,
        objective,
        values,
        iterations: sx.iterations,
    })
}

impl<'a> Simplex<'a> {
    fn ncols(&self) -> usize {
        self.lower.len()
    }

    fn var_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VStat::Basic => {
                // Basic variables are read through the basis.
                let r = self.basis.iter().position(|&b| b == j).unwrap();
                self.x_b[r]
            }
            VStat::AtLower => self.lower[j],
            VStat::AtUpper => self.upper[j],
        }
    }

    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        let (n, m) = (self.p.n, self.p.m);
        if j < n {
            for &(r, a) in &self.p.cols[j] {
                f(r, a);
            }
        } else if j < n + m {
            f(j - n, self.p.sigma[j - n]);
        } else {
            let k = j - n - m;
            f(self.art_rows[k], self.art_signs[k]);
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.p.m;
        let mut y = vec![0.0; m];
        for r in 0..m {
            let cb = self.c[self.basis[r]];
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, bi) in y.iter_mut().zip(row) {
                    *yi += cb * bi;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        let mut d = self.c[j];
        self.for_col(j, |r, a| d -= y[r] * a);
        d
    }

    /// Entering variable: (column, +1 to increase from lower / -1 to
    /// decrease from upper). Dantzig by default, Bland under stalling.
    fn find_entering(&self, y: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols() {
            if self.status[j] == VStat::Basic {
                continue;
            }
            if self.upper[j] - self.lower[j] <= tol::FIXED_RANGE {
                continue;
            }
            let d = self.reduced_cost(j, y);
            let dir = match self.status[j] {
                VStat::AtLower if d > tol::OBJECTIVE_CMP => 1.0,
                VStat::AtUpper if d < -tol::OBJECTIVE_CMP => -1.0,
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            match best {
                Some((_, score, _)) if d.abs() <= score => {}
                _ => best = Some((j, d.abs(), dir)),
            }
        }
        best.map(|(j, _, dir)| (j, dir))
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.p.m;
        let mut alpha = vec![0.0; m];
        self.for_col(j, |i, a| {
            for (r, slot) in alpha.iter_mut().enumerate() {
                *slot += a * self.binv[r * m + i];
            }
        });
        alpha
    }

    fn run_phase(&mut self) -> Result<Inner, LpError> {
        let mut confirmations = 0usize;
        loop {
            match self.iterate_until_stable()? {
                Inner::Unbounded => return Ok(Inner::Unbounded),
                Inner::Optimal => {
                    // Refresh the factorization and re-check optimality so
                    // the reported point is clean.
                    self.refactorize()?;
                    let y = self.duals();
                    if self.find_entering(&y).is_none() || confirmations >= 8 {
                        return Ok(Inner::Optimal);
                    }
                    confirmations += 1;
                }
            }
        }
    }

    fn iterate_until_stable(&mut self) -> Result<Inner, LpError> {
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(LpError::IterationLimit(self.iterations));
            }
            if self.iterations.is_multiple_of(REFACTOR_EVERY) {
                self.refactorize()?;
            }

            let y = self.duals();
            let Some((j_enter, dir)) = self.find_entering(&y) else {
                return Ok(Inner::Optimal);
            };
            let alpha = self.ftran(j_enter);

            // Ratio test over basic variables plus the entering variable's
            // own opposite bound.
            let m = self.p.m;
            let own_range = self.upper[j_enter] - self.lower[j_enter];
            let mut t_row = f64::INFINITY;
            let mut leave: Option<(usize, f64, bool)> = None; // (row, pivot, to_upper)
            for (r, &alpha_r) in alpha.iter().enumerate() {
                let a = dir * alpha_r;
                let basic = self.basis[r];
                let (limit, to_upper) = if a > PIVOT_TOL {
                    ((self.x_b[r] - self.lower[basic]) / a, false)
                } else if a < -PIVOT_TOL {
                    let ub = self.upper[basic];
                    if ub.is_infinite() {
                        continue;
                    }
                    ((self.x_b[r] - ub) / a, true)
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let take = match leave {
                    None => limit < t_row,
                    Some((cur_r, cur_pivot, _)) => {
                        if limit < t_row - RATIO_TIE {
                            true
                        } else if limit < t_row + RATIO_TIE {
                            if self.bland {
                                self.basis[r] < self.basis[cur_r]
                            } else {
                                alpha_r.abs() > cur_pivot.abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if take {
                    t_row = t_row.min(limit);
                    leave = Some((r, alpha_r, to_upper));
                }
            }

            if own_range <= t_row {
                if own_range.is_infinite() {
                    return Ok(Inner::Unbounded);
                }
                // Bound flip: the entering variable jumps to its other bound.
                for (r, &alpha_r) in alpha.iter().enumerate() {
                    self.x_b[r] -= dir * own_range * alpha_r;
                }
                self.status[j_enter] = match self.status[j_enter] {
                    VStat::AtLower => VStat::AtUpper,
                    VStat::AtUpper => VStat::AtLower,
                    VStat::Basic => unreachable!("entering variable is nonbasic"),
                };
                self.stall = 0;
                continue;
            }

            let (r_leave, pivot, to_upper) = leave.expect("bounded step without leaving row");
            let t = t_row;
            let enter_from = match self.status[j_enter] {
                VStat::AtLower => self.lower[j_enter],
                VStat::AtUpper => self.upper[j_enter],
                VStat::Basic => unreachable!(),
            };
            for (r, &alpha_r) in alpha.iter().enumerate() {
                self.x_b[r] -= dir * t * alpha_r;
            }
            let leaving = self.basis[r_leave];
            self.status[leaving] = if to_upper {
                VStat::AtUpper
            } else {
                VStat::AtLower
            };
            self.basis[r_leave] = j_enter;
            self.status[j_enter] = VStat::Basic;
            self.x_b[r_leave] = enter_from + dir * t;

            // Product-form update of the dense inverse.
            {
                let row_start = r_leave * m;
                let inv_pivot = 1.0 / pivot;
                for i in 0..m {
                    self.binv[row_start + i] *= inv_pivot;
                }
                for (r, &factor) in alpha.iter().enumerate() {
                    if r == r_leave {
                        continue;
                    }
                    if factor != 0.0 {
                        let rs = r * m;
                        for i in 0..m {
                            self.binv[rs + i] -= factor * self.binv[row_start + i];
                        }
                    }
                }
            }

            if t <= DEGENERATE_STEP {
                self.stall += 1;
                if self.stall >= tol::STALL_PIVOTS {
                    self.bland = true;
                }
            } else {
                self.stall = 0;
            }
        }
    }

    /// Rebuild the dense inverse from the current basis and recompute basic
    /// values from scratch.
    fn refactorize(&mut self) -> Result<(), LpError> {
        let m = self.p.m;
        if m == 0 {
            return Ok(());
        }
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (col, &j) in self.basis.iter().enumerate() {
            self.for_col(j, |r, a| aug[r * w + col] = a);
        }
        for r in 0..m {
            aug[r * w + m + r] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = aug[col * w + col].abs();
            for r in col + 1..m {
                let v = aug[r * w + col].abs();
                if v > piv_val {
                    piv_row = r;
                    piv_val = v;
                }
            }
            if piv_val < 1e-11 {
                return Err(LpError::Numerical("singular basis matrix".into()));
            }
            if piv_row != col {
                for i in 0..w {
                    aug.swap(col * w + i, piv_row * w + i);
                }
            }
            let inv = 1.0 / aug[col * w + col];
            for i in 0..w {
                aug[col * w + i] *= inv;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let factor = aug[r * w + col];
                if factor != 0.0 {
                    for i in 0..w {
                        aug[r * w + i] -= factor * aug[col * w + i];
                    }
                }
            }
        }
        for r in 0..m {
            for i in 0..m {
                self.binv[r * m + i] = aug[r * w + m + i];
            }
        }

        let mut resid = self.p.rhs.clone();
        for j in 0..self.ncols() {
            let xv = match self.status[j] {
                VStat::Basic => continue,
                VStat::AtLower => self.lower[j],
                VStat::AtUpper => self.upper[j],
            };
            if xv != 0.0 {
                self.for_col(j, |r, a| resid[r] -= a * xv);
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.x_b[r] = row.iter().zip(&resid).map(|(b, v)| b * v).sum();
        }
        Ok(())
    }
}

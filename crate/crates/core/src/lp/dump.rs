//! Plain-text dump of an [`LpModel`] for external cross-checking.
//!
//! The grammar is a small subset of the CPLEX LP format:
//!
//! ```text
//! Maximize
//!  obj: <term> <term> ...
//! Subject To
//!  c<row>: <term> ... (<=|=|>=) <rhs>
//! Bounds
//!  <lower> <= x<var> <= <upper or +inf>
//! Binaries
//!  x<var> x<var> ...
//! End
//! ```
//!
//! where `<term>` is `(+|-) <coefficient> x<var>`. Variables are named by
//! index, rows by position. Files in this format load directly into common
//! external solvers for verification.

use super::LpModel;
use std::fmt::Write;

/// Render the model in the documented LP text grammar.
pub fn to_lp_text(model: &LpModel) -> String {
    let mut out = String::new();
    out.push_str("Maximize\n obj:");
    let mut any = false;
    for v in 0..model.num_vars() {
        let c = model.objective_coeff(v);
        if c != 0.0 {
            push_term(&mut out, c, v);
            any = true;
        }
    }
    if !any {
        out.push_str(" 0 x0");
    }
    out.push_str("\nSubject To\n");
    for (r, row) in model.rows().iter().enumerate() {
        write!(out, " c{r}:").unwrap();
        if row.coeffs.is_empty() {
            out.push_str(" 0 x0");
        }
        for &(var, coef) in &row.coeffs {
            push_term(&mut out, coef, var);
        }
        writeln!(out, " {} {}", row.rel.symbol(), fmt_num(row.rhs)).unwrap();
    }
    out.push_str("Bounds\n");
    for v in 0..model.num_vars() {
        let (lo, up) = model.bounds(v);
        let up_text = if up.is_infinite() {
            "+inf".to_string()
        } else {
            fmt_num(up)
        };
        writeln!(out, " {} <= x{} <= {}", fmt_num(lo), v, up_text).unwrap();
    }
    if !model.binaries().is_empty() {
        out.push_str("Binaries\n");
        for &b in model.binaries() {
            write!(out, " x{b}").unwrap();
        }
        out.push('\n');
    }
    out.push_str("End\n");
    out
}

fn push_term(out: &mut String, coef: f64, var: usize) {
    let sign = if coef < 0.0 { '-' } else { '+' };
    write!(out, " {} {} x{}", sign, fmt_num(coef.abs()), var).unwrap();
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

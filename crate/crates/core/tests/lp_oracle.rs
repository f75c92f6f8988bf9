//! Solver cross-checks against brute-force oracles that share no code with
//! the simplex: vertex enumeration for LPs, exhaustive binary enumeration
//! for MIPs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use v2g_core::lp::{solve_lp, solve_mip, LpModel, Rel, SolveStatus};

/// Solve a dense n x n system with partial pivoting. Returns `None` when the
/// matrix is (near-)singular.
#[allow(clippy::needless_range_loop)] // parallel row indexing in the elimination
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s -= a[r][k] * x[k];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

/// One linear condition `coeffs . x (rel) rhs` from the constraint pool.
#[derive(Clone)]
struct Condition {
    coeffs: Vec<f64>,
    rel: Rel,
    rhs: f64,
    mandatory: bool,
}

/// Maximal objective over all vertices of the (bounded) feasible region,
/// found by enumerating active sets of size n.
fn vertex_enumeration_optimum(model: &LpModel) -> Option<f64> {
    let n = model.num_vars();
    let mut pool: Vec<Condition> = Vec::new();
    for row in model.rows() {
        let mut dense = vec![0.0; n];
        for &(v, c) in &row.coeffs {
            dense[v] += c;
        }
        pool.push(Condition {
            coeffs: dense,
            rel: row.rel,
            rhs: row.rhs,
            mandatory: row.rel == Rel::Eq,
        });
    }
    for v in 0..n {
        let (lo, up) = model.bounds(v);
        let mut unit = vec![0.0; n];
        unit[v] = 1.0;
        pool.push(Condition {
            coeffs: unit.clone(),
            rel: Rel::Ge,
            rhs: lo,
            mandatory: false,
        });
        pool.push(Condition {
            coeffs: unit,
            rel: Rel::Le,
            rhs: up,
            mandatory: false,
        });
    }

    let mandatory: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].mandatory).collect();
    let free: Vec<usize> = (0..pool.len()).filter(|&i| !pool[i].mandatory).collect();
    if mandatory.len() > n {
        return None;
    }
    let choose = n - mandatory.len();

    let feasible = |x: &[f64]| -> bool {
        for cond in &pool {
            let lhs: f64 = cond.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let ok = match cond.rel {
                Rel::Le => lhs <= cond.rhs + 1e-7,
                Rel::Ge => lhs >= cond.rhs - 1e-7,
                Rel::Eq => (lhs - cond.rhs).abs() <= 1e-7,
            };
            if !ok {
                return false;
            }
        }
        true
    };

    let mut best: Option<f64> = None;
    let mut combo = vec![0usize; choose];
    let mut eval_active_set = |active: &[usize], best: &mut Option<f64>| {
        let a: Vec<Vec<f64>> = active.iter().map(|&i| pool[i].coeffs.clone()).collect();
        let b: Vec<f64> = active.iter().map(|&i| pool[i].rhs).collect();
        if let Some(x) = solve_dense(a, b) {
            if feasible(&x) {
                let obj: f64 = (0..n).map(|v| model.objective_coeff(v) * x[v]).sum();
                *best = Some(best.map_or(obj, |cur: f64| cur.max(obj)));
            }
        }
    };

    // Enumerate `choose`-subsets of the non-mandatory pool.
    fn recurse(
        free: &[usize],
        start: usize,
        depth: usize,
        combo: &mut Vec<usize>,
        mandatory: &[usize],
        eval: &mut impl FnMut(&[usize], &mut Option<f64>),
        best: &mut Option<f64>,
    ) {
        if depth == combo.len() {
            let mut active = mandatory.to_vec();
            active.extend_from_slice(combo);
            eval(&active, best);
            return;
        }
        for i in start..free.len() {
            combo[depth] = free[i];
            recurse(free, i + 1, depth + 1, combo, mandatory, eval, best);
        }
    }
    recurse(
        &free,
        0,
        0,
        &mut combo,
        &mandatory,
        &mut eval_active_set,
        &mut best,
    );
    best
}

fn random_lp(rng: &mut ChaCha8Rng) -> LpModel {
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(1..=6);
    let mut model = LpModel::new();
    let mut mid = Vec::with_capacity(n);
    for _ in 0..n {
        let lo: f64 = rng.gen_range(-3.0..0.0);
        let up = lo + rng.gen_range(0.5..4.0);
        model.add_var(lo, up, rng.gen_range(-2.0..2.0));
        mid.push((lo + up) / 2.0);
    }
    let mut eq_budget = 1usize;
    for _ in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..n)
            .filter_map(|v| {
                if rng.gen_bool(0.8) {
                    Some((v, rng.gen_range(-2.0..2.0)))
                } else {
                    None
                }
            })
            .collect();
        if coeffs.is_empty() {
            continue;
        }
        let at_mid: f64 = coeffs.iter().map(|&(v, c)| c * mid[v]).sum();
        let rel = if eq_budget > 0 && rng.gen_bool(0.15) {
            eq_budget -= 1;
            Rel::Eq
        } else if rng.gen_bool(0.5) {
            Rel::Le
        } else {
            Rel::Ge
        };
        // Anchor the rhs so the box midpoint stays feasible.
        let rhs = match rel {
            Rel::Le => at_mid + rng.gen_range(0.1..2.0),
            Rel::Ge => at_mid - rng.gen_range(0.1..2.0),
            Rel::Eq => at_mid,
        };
        model.add_row(rel, rhs, &coeffs);
    }
    model
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4101);
    let mut checked = 0;
    for case in 0..100 {
        let model = random_lp(&mut rng);
        let oracle = vertex_enumeration_optimum(&model)
            .unwrap_or_else(|| panic!("case {case}: oracle found no vertex"));
        let sol = solve_lp(&model).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
        assert!(
            (sol.objective - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "case {case}: simplex {} vs oracle {}",
            sol.objective,
            oracle
        );
        checked += 1;
    }
    assert_eq!(checked, 100);
}

fn random_mip(rng: &mut ChaCha8Rng) -> LpModel {
    let nc = rng.gen_range(1..=6);
    let nb = rng.gen_range(1..=6);
    let mut model = LpModel::new();
    let mut xs = Vec::new();
    let mut uppers = Vec::new();
    for _ in 0..nc {
        let u: f64 = rng.gen_range(0.5..3.0);
        xs.push(model.add_var(0.0, u, rng.gen_range(-1.0..2.0)));
        uppers.push(u);
    }
    let ys: Vec<usize> = (0..nb)
        .map(|_| model.add_binary(rng.gen_range(-1.0..3.0)))
        .collect();
    let mut rows = 0;
    for (i, &x) in xs.iter().enumerate() {
        if rows >= 8 {
            break;
        }
        if rng.gen_bool(0.7) {
            let y = ys[rng.gen_range(0..nb)];
            model.add_row(Rel::Le, 0.0, &[(x, 1.0), (y, -uppers[i])]);
            rows += 1;
        }
    }
    for _ in 0..rng.gen_range(1..=3) {
        if rows >= 8 {
            break;
        }
        let mut coeffs = Vec::new();
        for &x in &xs {
            if rng.gen_bool(0.5) {
                coeffs.push((x, rng.gen_range(0.0..2.0)));
            }
        }
        for &y in &ys {
            if rng.gen_bool(0.5) {
                coeffs.push((y, rng.gen_range(0.0..2.0)));
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        let weight: f64 = coeffs.iter().map(|&(_, c)| c).sum();
        model.add_row(Rel::Le, rng.gen_range(0.3..0.9) * weight, &coeffs);
        rows += 1;
    }
    model
}

/// Exhaustive oracle: best LP objective over all binary assignments.
fn enumeration_optimum(model: &LpModel) -> Option<f64> {
    let binaries = model.binaries().to_vec();
    let mut best: Option<f64> = None;
    for pattern in 0..(1u32 << binaries.len()) {
        let mut fixed = model.clone();
        for (k, &b) in binaries.iter().enumerate() {
            let v = ((pattern >> k) & 1) as f64;
            fixed.set_bounds(b, v, v);
        }
        let sol = solve_lp(&fixed).unwrap();
        if sol.status == SolveStatus::Optimal {
            best = Some(best.map_or(sol.objective, |cur: f64| cur.max(sol.objective)));
        }
    }
    best
}

#[test]
fn random_mips_match_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4102);
    for case in 0..100 {
        let model = random_mip(&mut rng);
        let oracle = enumeration_optimum(&model);
        let sol = solve_mip(&model, 0.0).unwrap();
        match oracle {
            Some(best) => {
                assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
                assert!(
                    (sol.objective - best).abs() <= 1e-6 * best.abs().max(1.0),
                    "case {case}: branch-and-bound {} vs enumeration {}",
                    sol.objective,
                    best
                );
            }
            None => assert_eq!(sol.status, SolveStatus::Infeasible, "case {case}"),
        }
    }
}

#[test]
fn relaxation_bounds_every_mip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4103);
    for case in 0..60 {
        let model = random_mip(&mut rng);
        let lp = solve_lp(&model).unwrap();
        let mip = solve_mip(&model, 0.0).unwrap();
        if lp.status == SolveStatus::Optimal && mip.status == SolveStatus::Optimal {
            assert!(
                lp.objective >= mip.objective - 1e-9,
                "case {case}: relaxation {} below MIP {}",
                lp.objective,
                mip.objective
            );
        }
    }
}

#[test]
fn solves_are_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4104);
    for _ in 0..20 {
        let model = random_mip(&mut rng);
        let a = solve_mip(&model, 0.0).unwrap();
        let b = solve_mip(&model, 0.0).unwrap();
        assert_eq!(a.status, b.status);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.values, b.values);
        assert_eq!(a.node_count, b.node_count);
    }
}

#[test]
fn objective_scaling_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4105);
    for case in 0..30 {
        let model = random_lp(&mut rng);
        let base = solve_lp(&model).unwrap();
        if base.status != SolveStatus::Optimal {
            continue;
        }
        for alpha in [0.5, 2.0] {
            let mut scaled = model.clone();
            for v in 0..model.num_vars() {
                scaled.set_objective(v, alpha * model.objective_coeff(v));
            }
            let sol = solve_lp(&scaled).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert_eq!(
                sol.values, base.values,
                "case {case}: argmax moved under objective scaling {alpha}"
            );
            assert!(
                (sol.objective - alpha * base.objective).abs()
                    <= 1e-9 * base.objective.abs().max(1.0),
                "case {case}: objective did not scale by {alpha}"
            );
        }
    }
}

//! Branch and bound over the binary variables of an [`LpModel`].
//!
//! Node selection is best-bound with depth-first tie-breaking; branching
//! picks the lowest-index fractional binary and explores the down branch
//! first. The incumbent is warm-started from the rounded root relaxation.
//! All choices are deterministic, so identical models produce bit-identical
//! solutions.

use super::simplex::{solve_prepared, LpError, Prepared};
use super::{tol, LpModel, SolveStatus};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Outcome of a mixed-integer solve.
#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: SolveStatus,
    /// Objective of the incumbent (meaningful when `status == Optimal`).
    pub objective: f64,
    pub values: Vec<f64>,
    /// Proven relative gap between the incumbent and the best bound.
    pub achieved_gap: f64,
    /// Nodes whose relaxation was solved, including the root and warm start.
    pub node_count: usize,
}

#[derive(Debug, Error)]
pub enum MipError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("model has {count} binaries, limit is {limit}")]
    BinaryLimit { count: usize, limit: usize },
    #[error("node limit {limit} exceeded")]
    NodeLimit {
        limit: usize,
        /// Best integer-feasible solution found before hitting the limit.
        incumbent: Option<Box<MipSolution>>,
    },
}

struct Node {
    bound: f64,
    depth: usize,
    seq: u64,
    /// Binary variables fixed on the path to this node.
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: higher bound first, then deeper, then
        // lower sequence number (down branches are pushed first).
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Solve `model` to the requested relative MIP gap.
pub fn solve_mip(model: &LpModel, gap: f64) -> Result<MipSolution, MipError> {
    solve_mip_with_limit(model, gap, tol::DEFAULT_NODE_LIMIT)
}

pub fn solve_mip_with_limit(
    model: &LpModel,
    gap: f64,
    node_limit: usize,
) -> Result<MipSolution, MipError> {
    model.validate().map_err(LpError::Model)?;
    let binaries: Vec<usize> = model.binaries().to_vec();
    if binaries.len() > tol::DEFAULT_BINARY_LIMIT {
        return Err(MipError::BinaryLimit {
            count: binaries.len(),
            limit: tol::DEFAULT_BINARY_LIMIT,
        });
    }

    let prepared = Prepared::from_model(model);
    let n = model.num_vars();
    let mut base_lower = Vec::with_capacity(n);
    let mut base_upper = Vec::with_capacity(n);
    for v in 0..n {
        let (lo, up) = model.bounds(v);
        base_lower.push(lo);
        base_upper.push(up);
    }

    let mut node_count = 0usize;
    let solve_node =
        |fixes: &[(usize, f64)], node_count: &mut usize| -> Result<super::LpSolution, LpError> {
            *node_count += 1;
            if fixes.is_empty() {
                solve_prepared(&prepared, &base_lower, &base_upper)
            } else {
                let mut lo = base_lower.clone();
                let mut up = base_upper.clone();
                for &(var, val) in fixes {
                    lo[var] = val;
                    up[var] = val;
                }
                solve_prepared(&prepared, &lo, &up)
            }
        };

    let root = solve_node(&[], &mut node_count)?;
    match root.status {
        SolveStatus::Infeasible => {
            return Ok(MipSolution {
                status: SolveStatus::Infeasible,
                objective: f64::NEG_INFINITY,
                values: Vec::new(),
                achieved_gap: 0.0,
                node_count,
            });
        }
        SolveStatus::Unbounded => {
            return Ok(MipSolution {
                status: SolveStatus::Unbounded,
                objective: f64::INFINITY,
                values: Vec::new(),
                achieved_gap: 0.0,
                node_count,
            });
        }
        SolveStatus::Optimal => {}
    }

    let fractional = |values: &[f64]| -> Option<usize> {
        binaries
            .iter()
            .copied()
            .find(|&b| (values[b] - values[b].round()).abs() > tol::INTEGRALITY)
    };

    let snap = |mut values: Vec<f64>| -> Vec<f64> {
        for &b in &binaries {
            values[b] = values[b].round();
        }
        values
    };

    if fractional(&root.values).is_none() {
        return Ok(MipSolution {
            status: SolveStatus::Optimal,
            objective: root.objective,
            values: snap(root.values),
            achieved_gap: 0.0,
            node_count,
        });
    }

    // Warm-start incumbent: round the root relaxation and repair with an LP.
    // If nearest-rounding is infeasible, retry with fractionals rounded down.
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    for rounder in [f64::round, f64::floor] {
        let fixes: Vec<(usize, f64)> = binaries
            .iter()
            .map(|&b| (b, rounder(root.values[b])))
            .collect();
        let warm = solve_node(&fixes, &mut node_count)?;
        if warm.status == SolveStatus::Optimal {
            incumbent = Some((warm.objective, snap(warm.values)));
            break;
        }
    }

    let prune_margin = |inc: f64| gap * inc.abs() + 1e-12;

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: root.objective,
        depth: 0,
        seq,
        fixes: Vec::new(),
    });

    while let Some(node) = heap.pop() {
        if let Some((inc_obj, _)) = &incumbent {
            if node.bound <= inc_obj + prune_margin(*inc_obj) {
                // Best-bound order: nothing left can beat the incumbent.
                break;
            }
        }
        if node_count >= node_limit {
            return Err(MipError::NodeLimit {
                limit: node_limit,
                incumbent: incumbent.map(|(obj, values)| {
                    Box::new(MipSolution {
                        status: SolveStatus::Optimal,
                        objective: obj,
                        values,
                        achieved_gap: relative_gap(node.bound, obj),
                        node_count,
                    })
                }),
            });
        }

        let sol = solve_node(&node.fixes, &mut node_count)?;
        match sol.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => {
                return Ok(MipSolution {
                    status: SolveStatus::Unbounded,
                    objective: f64::INFINITY,
                    values: Vec::new(),
                    achieved_gap: 0.0,
                    node_count,
                });
            }
            SolveStatus::Optimal => {}
        }
        if let Some((inc_obj, _)) = &incumbent {
            if sol.objective <= inc_obj + prune_margin(*inc_obj) {
                continue;
            }
        }

        match fractional(&sol.values) {
            None => {
                let better = match &incumbent {
                    Some((inc_obj, _)) => sol.objective > inc_obj + tol::OBJECTIVE_CMP,
                    None => true,
                };
                if better {
                    incumbent = Some((sol.objective, snap(sol.values)));
                }
            }
            Some(branch_var) => {
                for val in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((branch_var, val));
                    seq += 1;
                    heap.push(Node {
                        bound: sol.objective,
                        depth: node.depth + 1,
                        seq,
                        fixes,
                    });
                }
            }
        }
    }

    match incumbent {
        Some((obj, values)) => {
            // An exhausted tree proves the incumbent optimal; otherwise the
            // best remaining node bound caps the gap.
            let achieved = match heap.peek() {
                None => 0.0,
                Some(top) => relative_gap(top.bound.max(obj), obj),
            };
            Ok(MipSolution {
                status: SolveStatus::Optimal,
                objective: obj,
                values,
                achieved_gap: achieved,
                node_count,
            })
        }
        None => Ok(MipSolution {
            status: SolveStatus::Infeasible,
            objective: f64::NEG_INFINITY,
            values: Vec::new(),
            achieved_gap: 0.0,
            node_count,
        }),
    }
}

fn relative_gap(upper_bound: f64, incumbent: f64) -> f64 {
    ((upper_bound - incumbent) / incumbent.abs().max(1e-10)).max(0.0)
}

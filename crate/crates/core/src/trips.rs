//! Trip start-time optimization: enumerate feasible start steps within the
//! travel window and keep the revenue-maximizing day schedule.
//!
//! Candidate solves are independent and run on the ambient rayon pool;
//! results are reduced in candidate order, so the selection is deterministic
//! regardless of worker scheduling.

use crate::charging::{
    effective_start_energy, solve_day, ChargingError, DaySolution, PlannedTrip, SolveOptions,
};
use crate::types::{EvParams, PriceSeries, ScenarioKind, TimeGrid, TripSpec, Violation};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Revenue (or failure diagnostic) for one candidate start step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub start_step: usize,
    pub feasible: bool,
    pub revenue_net_gbp: Option<f64>,
    pub diagnostic: Option<String>,
}

/// The selected start time with its schedule and the full candidate table.
#[derive(Debug)]
pub struct TripChoice {
    pub start_step: usize,
    pub day: DaySolution,
    pub per_candidate: Vec<CandidateOutcome>,
    /// Diagnostics for candidates that were skipped as infeasible.
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum TripError {
    #[error("invalid trip inputs: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("every candidate start is infeasible: {}", .diagnostics.join("; "))]
    AllInfeasible { diagnostics: Vec<String> },
    #[error(transparent)]
    Charging(#[from] ChargingError),
}

/// All start steps `s` with `window_start <= s` and `s + duration <=
/// window_end`, ascending. Nonempty for any valid [`TripSpec`] because the
/// original start always qualifies.
pub fn feasible_start_times(trip: &TripSpec, grid: &TimeGrid) -> Vec<usize> {
    let latest_by_window = trip.window_end_step.saturating_sub(trip.duration_steps);
    let latest_by_grid = grid.step_count.saturating_sub(trip.duration_steps);
    let latest = latest_by_window.min(latest_by_grid);
    if latest < trip.window_start_step {
        return Vec::new();
    }
    (trip.window_start_step..=latest).collect()
}

/// The EV with its start-of-day energy raised (when enabled) so that the
/// *originally scheduled* departure is reachable. Anchoring the raise at the
/// original start keeps every candidate comparable: no candidate gets free
/// energy the original plan would not have had.
pub fn departure_ready_ev(
    ev: &EvParams,
    trip: &TripSpec,
    grid: &TimeGrid,
    raise_start_soc: bool,
) -> EvParams {
    let anchored = PlannedTrip::at_original_start(trip);
    EvParams {
        e_start_kwh: effective_start_energy(ev, Some(&anchored), grid, raise_start_soc),
        ..*ev
    }
}

/// Solve one day model per candidate start and return the argmax of net
/// revenue (ties broken by earliest start). Infeasible candidates are
/// skipped with warnings; if every candidate fails the error carries all
/// diagnostics.
pub fn optimize_trip(
    ev: &EvParams,
    trip: &TripSpec,
    prices: &PriceSeries,
    scenario: ScenarioKind,
    grid: &TimeGrid,
    opts: &SolveOptions,
) -> Result<TripChoice, TripError> {
    let violations = crate::types::validate(ev, trip, prices, grid);
    if !violations.is_empty() {
        return Err(TripError::Invalid(violations));
    }
    let candidates = feasible_start_times(trip, grid);

    let ev_eff = departure_ready_ev(ev, trip, grid, opts.raise_start_soc);
    let solve_opts = SolveOptions {
        raise_start_soc: false,
        ..*opts
    };

    let solved: Vec<(usize, Result<DaySolution, ChargingError>)> = candidates
        .par_iter()
        .map(|&start| {
            let planned = PlannedTrip::from_spec(trip, start);
            (
                start,
                solve_day(&ev_eff, Some(&planned), prices, scenario, grid, &solve_opts),
            )
        })
        .collect();

    let mut per_candidate = Vec::with_capacity(solved.len());
    let mut warnings = Vec::new();
    let mut best: Option<(usize, DaySolution)> = None;
    for (start, outcome) in solved {
        match outcome {
            Ok(day) => {
                per_candidate.push(CandidateOutcome {
                    start_step: start,
                    feasible: true,
                    revenue_net_gbp: Some(day.schedule.revenue_net_gbp),
                    diagnostic: None,
                });
                let better = match &best {
                    Some((_, incumbent)) => {
                        day.schedule.revenue_net_gbp > incumbent.schedule.revenue_net_gbp
                    }
                    None => true,
                };
                if better {
                    best = Some((start, day));
                }
            }
            Err(err @ ChargingError::Infeasible { .. }) => {
                let message = err.to_string();
                warnings.push(format!("start {start}: {message}"));
                per_candidate.push(CandidateOutcome {
                    start_step: start,
                    feasible: false,
                    revenue_net_gbp: None,
                    diagnostic: Some(message),
                });
            }
            Err(other) => return Err(other.into()),
        }
    }

    match best {
        Some((start_step, day)) => Ok(TripChoice {
            start_step,
            day,
            per_candidate,
            warnings,
        }),
        None => Err(TripError::AllInfeasible {
            diagnostics: warnings,
        }),
    }
}

/// Candidate table CSV with the documented header. Infeasible candidates
/// leave the revenue field empty.
pub fn candidates_csv(per_candidate: &[CandidateOutcome]) -> String {
    let mut out = String::from("start_step,feasible,revenue_gbp\n");
    for c in per_candidate {
        match c.revenue_net_gbp {
            Some(rev) => out.push_str(&format!("{},{},{:.4}\n", c.start_step, c.feasible, rev)),
            None => out.push_str(&format!("{},{},\n", c.start_step, c.feasible)),
        }
    }
    out
}

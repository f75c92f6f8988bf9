//! Per-EV day model: translates one EV-day (parameters, connection mask,
//! prices, scenario) into a solver model and decodes solutions into
//! [`Schedule`]s.
//!
//! The model maximises availability revenue minus charging cost subject to
//! the battery energy balance, charger power coupling, the sustain
//! requirement on upward service and the departure/terminal energy
//! requirements. Non-V2G scenarios are the same model with discharge and
//! balancing variables pinned to zero, which keeps scenarios comparable.

use crate::lp::{
    solve_lp, solve_mip_with_limit, tol, LpModel, MipError, MipSolution, Rel, SolveStatus,
};
use crate::types::{
    validate_ev, validate_grid, validate_prices, EvParams, PriceSeries, ScenarioKind, Schedule,
    TimeGrid, TripSpec, Violation,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How discharged energy enters the objective.
///
/// With a zero sell price the sell-price penalty is inert, so the default
/// charges a fixed unit price per discharged kWh instead; the pure sell-price
/// forms remain available as config switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum DischargeTerm {
    /// Discharge earns the sell price (no penalty).
    SellRevenue,
    /// `delta * sell_price` charged per discharged kWh.
    SellPenalty,
    /// `delta * price` charged per discharged kWh regardless of sell price.
    UnitPenalty { price_gbp_per_kwh: f64 },
}

impl Default for DischargeTerm {
    fn default() -> Self {
        DischargeTerm::UnitPenalty {
            price_gbp_per_kwh: 0.01,
        }
    }
}

/// Solver and policy knobs shared by all day solves.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative MIP gap at which branch and bound may stop.
    pub mip_gap: f64,
    /// Branch-and-bound node cap.
    pub node_limit: usize,
    /// Discharge penalty form; `delta` itself lives on [`EvParams`].
    pub discharge_term: DischargeTerm,
    /// Raise the start-of-day energy to the minimum level from which the
    /// originally scheduled departure is reachable at full charger power.
    pub raise_start_soc: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            mip_gap: tol::DEFAULT_MIP_GAP,
            node_limit: tol::DEFAULT_NODE_LIMIT,
            discharge_term: DischargeTerm::default(),
            raise_start_soc: true,
        }
    }
}

/// A trip pinned to a concrete start step for one day solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrip {
    pub start_step: usize,
    pub duration_steps: usize,
    pub travel_energy_kwh: f64,
}

impl PlannedTrip {
    pub fn from_spec(trip: &TripSpec, start_step: usize) -> Self {
        PlannedTrip {
            start_step,
            duration_steps: trip.duration_steps,
            travel_energy_kwh: trip.travel_energy_kwh,
        }
    }

    pub fn at_original_start(trip: &TripSpec) -> Self {
        PlannedTrip::from_spec(trip, trip.original_start_step)
    }

    /// First connected step after the trip, if the trip ends inside the
    /// horizon.
    pub fn return_step(&self, grid: &TimeGrid) -> Option<usize> {
        let r = self.start_step + self.duration_steps;
        (r < grid.step_count).then_some(r)
    }
}

/// Per-step decision variable roles in the day model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Charge,
    Discharge,
    BsupC,
    BsupD,
    Energy,
    ChargeFlag,
    SustainAux,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Charge,
        Role::Discharge,
        Role::BsupC,
        Role::BsupD,
        Role::Energy,
        Role::ChargeFlag,
        Role::SustainAux,
    ];

    fn index(self) -> usize {
        match self {
            Role::Charge => 0,
            Role::Discharge => 1,
            Role::BsupC => 2,
            Role::BsupD => 3,
            Role::Energy => 4,
            Role::ChargeFlag => 5,
            Role::SustainAux => 6,
        }
    }
}

/// A built day model plus everything needed to decode its solutions.
#[derive(Debug, Clone)]
pub struct DayModelHandle {
    pub model: LpModel,
    pub scenario: ScenarioKind,
    grid: TimeGrid,
    mask: Vec<bool>,
    trip: Option<PlannedTrip>,
    prices: PriceSeries,
    ev: EvParams,
    start_energy_kwh: f64,
    discharge_term: DischargeTerm,
}

impl DayModelHandle {
    /// Solver variable index for `(step, role)`.
    pub fn var(&self, step: usize, role: Role) -> usize {
        step * Role::ALL.len() + role.index()
    }

    /// Effective start-of-day energy used by the model (after any raise).
    pub fn start_energy_kwh(&self) -> f64 {
        self.start_energy_kwh
    }
}

#[derive(Debug, Error)]
pub enum ChargingError {
    #[error("invalid day inputs: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(
        "day model infeasible{}{}",
        match .departure_step {
            Some(s) => format!(" at departure step {s}"),
            None => String::new(),
        },
        match .shortfall_kwh {
            Some(kwh) => format!(": departure energy short by {kwh:.3} kWh"),
            None => String::new(),
        }
    )]
    Infeasible {
        departure_step: Option<usize>,
        shortfall_kwh: Option<f64>,
    },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("cannot decode a solution with status {0:?}")]
    NotOptimal(SolveStatus),
    #[error("decode mismatch: {0}")]
    Decode(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl From<MipError> for ChargingError {
    fn from(e: MipError) -> Self {
        ChargingError::Solver(e.to_string())
    }
}

/// Start-of-day energy, optionally raised so the battery can reach
/// `e_req_kwh` by the planned departure when charging flat out from step 0.
/// The raise never exceeds `e_req_kwh`.
pub fn effective_start_energy(
    ev: &EvParams,
    trip: Option<&PlannedTrip>,
    grid: &TimeGrid,
    raise_start_soc: bool,
) -> f64 {
    let Some(trip) = trip else {
        return ev.e_start_kwh;
    };
    if !raise_start_soc {
        return ev.e_start_kwh;
    }
    let chargeable = trip.start_step as f64 * grid.step_hours * ev.p_max_kw * ev.eta_c;
    let needed = ev.e_req_kwh - chargeable;
    ev.e_start_kwh.max(needed.min(ev.e_req_kwh))
}

fn check_day_inputs(
    ev: &EvParams,
    mask: &[bool],
    prices: &PriceSeries,
    trip: Option<&PlannedTrip>,
    grid: &TimeGrid,
) -> Result<(), ChargingError> {
    let mut v = validate_grid(grid);
    v.extend(validate_ev(ev));
    v.extend(validate_prices(prices, grid));
    if mask.len() != grid.step_count {
        v.push(Violation {
            field: "mask".into(),
            message: format!(
                "length {} does not match step_count {}",
                mask.len(),
                grid.step_count
            ),
        });
    } else {
        match trip {
            Some(t) => {
                let end = t.start_step + t.duration_steps;
                if end > grid.step_count {
                    v.push(Violation {
                        field: "trip".into(),
                        message: format!("trip [{}, {end}) exceeds the horizon", t.start_step),
                    });
                } else {
                    let consistent = mask
                        .iter()
                        .enumerate()
                        .all(|(s, &m)| m == !(t.start_step..end).contains(&s));
                    if !consistent {
                        v.push(Violation {
                            field: "mask".into(),
                            message: "mask does not match the planned trip".into(),
                        });
                    }
                }
            }
            None => {
                if mask.iter().any(|m| !m) {
                    v.push(Violation {
                        field: "mask".into(),
                        message: "mask has away steps but no trip was supplied".into(),
                    });
                }
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(ChargingError::Invalid(v))
    }
}

/// Build the day model for one EV under the given scenario.
pub fn build_day_model(
    ev: &EvParams,
    mask: &[bool],
    prices: &PriceSeries,
    scenario: ScenarioKind,
    trip: Option<&PlannedTrip>,
    grid: &TimeGrid,
    opts: &SolveOptions,
) -> Result<DayModelHandle, ChargingError> {
    check_day_inputs(ev, mask, prices, trip, grid)?;

    let steps = grid.step_count;
    let dt = grid.step_hours;
    let v2g = scenario.v2g_enabled();
    let fr = scenario.fr_enabled();
    let start_energy = effective_start_energy(ev, trip, grid, opts.raise_start_soc);

    let mut etr = vec![0.0; steps];
    if let Some(t) = trip {
        if let Some(r) = t.return_step(grid) {
            etr[r] = t.travel_energy_kwh;
        }
    }

    // Per-kWh coefficient applied to discharge in the objective (negative
    // values are penalties).
    let discharge_coeff = |t: usize| -> f64 {
        match opts.discharge_term {
            DischargeTerm::SellRevenue => prices.sell[t],
            DischargeTerm::SellPenalty => -ev.delta_penalty * prices.sell[t],
            DischargeTerm::UnitPenalty { price_gbp_per_kwh } => {
                -ev.delta_penalty * price_gbp_per_kwh
            }
        }
    };

    let mut model = LpModel::new();
    for (t, &on) in mask.iter().enumerate() {
        let p_cap = if on { ev.p_max_kw } else { 0.0 };
        let v2g_cap = if on && v2g { ev.p_max_kw } else { 0.0 };
        let fr_cap = if on && fr { ev.p_max_kw } else { 0.0 };

        // Order must match Role::index.
        model.add_var(0.0, p_cap, -prices.buy[t] * dt); // Charge
        model.add_var(0.0, v2g_cap, discharge_coeff(t) * dt); // Discharge
        model.add_var(0.0, fr_cap, prices.fr[t] * dt); // BsupC
        model.add_var(0.0, fr_cap, prices.fr[t] * dt); // BsupD
        model.add_var(ev.e_min_kwh, ev.e_max_kwh, 0.0); // Energy
        if on && v2g {
            model.add_binary(0.0); // ChargeFlag
        } else if on {
            // Discharge is pinned to zero, so the flag can stay at 1 and the
            // model needs no binaries.
            model.add_var(1.0, 1.0, 0.0);
        } else {
            model.add_var(0.0, 0.0, 0.0);
        }
        let x1_upper = if on && fr {
            if t == 0 {
                ev.e_max_kwh.min(start_energy)
            } else {
                ev.e_max_kwh
            }
        } else {
            0.0
        };
        model.add_var(0.0, x1_upper, 0.0); // SustainAux
    }

    let mut handle = DayModelHandle {
        model: LpModel::new(),
        scenario,
        grid: *grid,
        mask: mask.to_vec(),
        trip: trip.copied(),
        prices: prices.clone(),
        ev: *ev,
        start_energy_kwh: start_energy,
        discharge_term: opts.discharge_term,
    };
    let var = |t: usize, role: Role| handle.var(t, role);

    // Departure and terminal energy requirements via bounds.
    if let Some(t) = trip {
        if t.start_step >= 1 {
            model.set_bounds(
                var(t.start_step - 1, Role::Energy),
                ev.e_req_kwh,
                ev.e_req_kwh,
            );
        } else if (start_energy - ev.e_req_kwh).abs() > 1e-9 {
            // Departure at step 0 pins a constant; an inconsistent constant
            // surfaces as solver infeasibility rather than a panic.
            model.add_row(Rel::Eq, ev.e_req_kwh - start_energy, &[]);
        }
    }
    {
        let last = var(steps - 1, Role::Energy);
        let (lo, up) = model.bounds(last);
        model.set_bounds(last, lo.max(ev.e_end_min_kwh), up);
    }

    // Energy balance, all steps.
    for (t, &etr_t) in etr.iter().enumerate() {
        let mut coeffs = vec![
            (var(t, Role::Energy), 1.0),
            (var(t, Role::Charge), -dt * ev.eta_c),
            (var(t, Role::Discharge), dt / ev.eta_d),
        ];
        let rhs = if t == 0 {
            start_energy - etr_t
        } else {
            coeffs.push((var(t - 1, Role::Energy), -1.0));
            -etr_t
        };
        model.add_row(Rel::Eq, rhs, &coeffs);
    }

    for (t, &on) in mask.iter().enumerate() {
        if !on {
            continue;
        }
        if v2g {
            // Charge/discharge exclusivity through the binary flag.
            model.add_row(
                Rel::Le,
                0.0,
                &[
                    (var(t, Role::Charge), 1.0),
                    (var(t, Role::ChargeFlag), -ev.p_max_kw),
                ],
            );
            model.add_row(
                Rel::Le,
                ev.p_max_kw,
                &[
                    (var(t, Role::Discharge), 1.0),
                    (var(t, Role::ChargeFlag), ev.p_max_kw),
                ],
            );
        }
        if fr {
            model.add_row(
                Rel::Le,
                ev.p_max_kw,
                &[(var(t, Role::BsupD), 1.0), (var(t, Role::Discharge), 1.0)],
            );
            model.add_row(
                Rel::Le,
                0.0,
                &[(var(t, Role::BsupC), 1.0), (var(t, Role::Charge), -1.0)],
            );
            model.add_row(
                Rel::Le,
                ev.p_max_kw,
                &[
                    (var(t, Role::Discharge), 1.0),
                    (var(t, Role::Charge), -1.0),
                    (var(t, Role::BsupC), 1.0),
                    (var(t, Role::BsupD), 1.0),
                ],
            );
            // Sustain: enough stored energy to hold the committed upward
            // service for t_sustain hours from either end of the step.
            let drain = ev.t_sustain_h / ev.eta_d;
            model.add_row(
                Rel::Ge,
                ev.e_min_kwh,
                &[
                    (var(t, Role::SustainAux), 1.0),
                    (var(t, Role::Charge), dt * ev.eta_c),
                    (var(t, Role::Discharge), -drain),
                    (var(t, Role::BsupD), -drain),
                ],
            );
            model.add_row(
                Rel::Le,
                0.0,
                &[
                    (var(t, Role::SustainAux), 1.0),
                    (var(t, Role::Energy), -1.0),
                ],
            );
            if t >= 1 {
                model.add_row(
                    Rel::Le,
                    0.0,
                    &[
                        (var(t, Role::SustainAux), 1.0),
                        (var(t - 1, Role::Energy), -1.0),
                    ],
                );
            }
        }
    }

    handle.model = model;
    Ok(handle)
}

/// Statistics and decoded schedule for one solved EV-day.
#[derive(Debug, Clone)]
pub struct DaySolution {
    pub schedule: Schedule,
    /// Solver objective: `revenue_net - penalty`.
    pub objective_gbp: f64,
    pub achieved_gap: f64,
    pub node_count: usize,
    pub start_energy_kwh: f64,
    pub warnings: Vec<String>,
}

/// Decode an optimal solver solution into a [`Schedule`].
pub fn decode_solution(
    handle: &DayModelHandle,
    solution: &MipSolution,
) -> Result<Schedule, ChargingError> {
    if solution.status != SolveStatus::Optimal {
        return Err(ChargingError::NotOptimal(solution.status));
    }
    let steps = handle.grid.step_count;
    let dt = handle.grid.step_hours;
    let snap = |x: f64| if x.abs() < 1e-9 { 0.0 } else { x };
    let fetch = |role: Role| -> Vec<f64> {
        (0..steps)
            .map(|t| snap(solution.values[handle.var(t, role)]))
            .collect()
    };
    let mut c = fetch(Role::Charge);
    let mut d = fetch(Role::Discharge);
    let bc = fetch(Role::BsupC);
    let bd = fetch(Role::BsupD);
    let e = fetch(Role::Energy);

    // The binary flag makes simultaneous charge/discharge impossible up to
    // solver tolerance; clear numerical dust so c*d == 0 holds exactly.
    for t in 0..steps {
        if c[t] > 0.0 && d[t] > 0.0 {
            if c[t].min(d[t]) > 1e-6 {
                return Err(ChargingError::Decode(format!(
                    "step {t}: simultaneous charge {} and discharge {}",
                    c[t], d[t]
                )));
            }
            if c[t] < d[t] {
                c[t] = 0.0;
            } else {
                d[t] = 0.0;
            }
        }
    }

    let mut revenue_fr = 0.0;
    let mut cost_energy = 0.0;
    let mut penalty = 0.0;
    for t in 0..steps {
        revenue_fr += (bc[t] + bd[t]) * handle.prices.fr[t] * dt;
        cost_energy += c[t] * handle.prices.buy[t] * dt;
        match handle.discharge_term {
            DischargeTerm::SellRevenue => {
                cost_energy -= d[t] * handle.prices.sell[t] * dt;
            }
            DischargeTerm::SellPenalty => {
                penalty += handle.ev.delta_penalty * handle.prices.sell[t] * d[t] * dt;
            }
            DischargeTerm::UnitPenalty { price_gbp_per_kwh } => {
                penalty += handle.ev.delta_penalty * price_gbp_per_kwh * d[t] * dt;
            }
        }
    }
    let revenue_net = revenue_fr - cost_energy;
    let rebuilt = revenue_net - penalty;
    if (rebuilt - solution.objective).abs() > 1e-6 * solution.objective.abs().max(1.0) {
        return Err(ChargingError::Decode(format!(
            "re-evaluated objective {rebuilt} differs from solver objective {}",
            solution.objective
        )));
    }

    Ok(Schedule {
        c_kw: c,
        d_kw: d,
        bsup_c_kw: bc,
        bsup_d_kw: bd,
        e_kwh: e,
        connected: handle.mask.clone(),
        revenue_fr_gbp: revenue_fr,
        cost_energy_gbp: cost_energy,
        penalty_gbp: penalty,
        revenue_net_gbp: revenue_net,
    })
}

/// Solve one EV-day under any scenario. Dumb charging uses the closed-form
/// policy; the other scenarios solve the day model to the configured gap.
pub fn solve_day(
    ev: &EvParams,
    trip: Option<&PlannedTrip>,
    prices: &PriceSeries,
    scenario: ScenarioKind,
    grid: &TimeGrid,
    opts: &SolveOptions,
) -> Result<DaySolution, ChargingError> {
    let mask = match trip {
        Some(t) => {
            let end = t.start_step + t.duration_steps;
            if end > grid.step_count {
                return Err(ChargingError::Invalid(vec![Violation {
                    field: "trip".into(),
                    message: format!("trip [{}, {end}) exceeds the horizon", t.start_step),
                }]));
            }
            (0..grid.step_count)
                .map(|s| !(t.start_step..end).contains(&s))
                .collect::<Vec<_>>()
        }
        None => vec![true; grid.step_count],
    };

    if scenario == ScenarioKind::DumbCharging {
        return dumb_charge_schedule(ev, &mask, prices, grid, trip, opts);
    }

    let handle = build_day_model(ev, &mask, prices, scenario, trip, grid, opts)?;
    let solution = solve_mip_with_limit(&handle.model, opts.mip_gap, opts.node_limit)?;
    match solution.status {
        SolveStatus::Optimal => {
            let schedule = decode_solution(&handle, &solution)?;
            Ok(DaySolution {
                schedule,
                objective_gbp: solution.objective,
                achieved_gap: solution.achieved_gap,
                node_count: solution.node_count,
                start_energy_kwh: handle.start_energy_kwh,
                warnings: Vec::new(),
            })
        }
        SolveStatus::Infeasible => Err(diagnose_infeasible(&handle)),
        SolveStatus::Unbounded => Err(ChargingError::Solver(
            "day model reported unbounded; all day variables are bounded".into(),
        )),
    }
}

/// Second solve with elastic slack on the departure requirement, reporting
/// the energy shortfall in kWh.
fn diagnose_infeasible(handle: &DayModelHandle) -> ChargingError {
    let Some(trip) = handle.trip else {
        return ChargingError::Infeasible {
            departure_step: None,
            shortfall_kwh: None,
        };
    };
    let departure_step = Some(trip.start_step);
    let ev = &handle.ev;
    if trip.start_step == 0 {
        // Departure at step 0: the shortfall is the constant gap itself.
        return ChargingError::Infeasible {
            departure_step,
            shortfall_kwh: Some((ev.e_req_kwh - handle.start_energy_kwh).max(0.0)),
        };
    }

    let mut elastic = handle.model.clone();
    for v in 0..elastic.num_vars() {
        elastic.set_objective(v, 0.0);
    }
    let anchor = handle.var(trip.start_step - 1, Role::Energy);
    elastic.set_bounds(anchor, ev.e_min_kwh, ev.e_max_kwh);
    let slack = elastic.add_var(0.0, f64::INFINITY, -1.0);
    elastic.add_row(Rel::Ge, ev.e_req_kwh, &[(anchor, 1.0), (slack, 1.0)]);
    let shortfall = match solve_lp(&elastic) {
        Ok(sol) if sol.status == SolveStatus::Optimal => Some((-sol.objective).max(0.0)),
        _ => None,
    };
    ChargingError::Infeasible {
        departure_step,
        shortfall_kwh: shortfall,
    }
}

/// Closed-form price-blind policy: charge at full power toward the required
/// level whenever connected and below it. No discharge, no balancing
/// services.
pub fn dumb_charge_schedule(
    ev: &EvParams,
    mask: &[bool],
    prices: &PriceSeries,
    grid: &TimeGrid,
    trip: Option<&PlannedTrip>,
    opts: &SolveOptions,
) -> Result<DaySolution, ChargingError> {
    check_day_inputs(ev, mask, prices, trip, grid)?;
    let steps = grid.step_count;
    let dt = grid.step_hours;
    let start_energy = effective_start_energy(ev, trip, grid, opts.raise_start_soc);
    let return_step = trip.and_then(|t| t.return_step(grid));

    let mut schedule = Schedule::idle(steps, mask.to_vec(), start_energy);
    let mut warnings = Vec::new();
    let mut e = start_energy;
    let mut cost = 0.0;
    for (t, &on) in mask.iter().enumerate() {
        if return_step == Some(t) {
            e -= trip.map(|x| x.travel_energy_kwh).unwrap_or(0.0);
        }
        if on && e < ev.e_req_kwh - 1e-12 {
            let headroom_rate = (ev.e_req_kwh - e) / (dt * ev.eta_c);
            let c = ev.p_max_kw.min(headroom_rate);
            schedule.c_kw[t] = c;
            e += c * dt * ev.eta_c;
            cost += c * dt * prices.buy[t];
        }
        schedule.e_kwh[t] = e;
    }

    if let Some(trip) = trip {
        if trip.start_step >= 1 {
            let at_departure = schedule.e_kwh[trip.start_step - 1];
            if at_departure < ev.e_req_kwh - 1e-9 {
                warnings.push(format!(
                    "departure at step {} with {:.3} kWh, below required {:.3} kWh",
                    trip.start_step, at_departure, ev.e_req_kwh
                ));
            }
        }
    }
    if e < ev.e_req_kwh - 1e-9 {
        warnings.push(format!(
            "insufficient plugged hours: day ends at {:.3} kWh, below required {:.3} kWh",
            e, ev.e_req_kwh
        ));
    }

    schedule.cost_energy_gbp = cost;
    schedule.revenue_net_gbp = -cost;
    Ok(DaySolution {
        schedule,
        objective_gbp: -cost,
        achieved_gap: 0.0,
        node_count: 0,
        start_energy_kwh: start_energy,
        warnings,
    })
}

/// Re-check every schedule invariant outside the solver. Returns all
/// violations found (empty when the schedule is clean).
pub fn verify_schedule(
    schedule: &Schedule,
    ev: &EvParams,
    grid: &TimeGrid,
    trip: Option<&PlannedTrip>,
    start_energy_kwh: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let dt = grid.step_hours;
    let steps = grid.step_count;
    let tol = 1e-6;
    let mut etr = vec![0.0; steps];
    if let Some(t) = trip {
        if let Some(r) = t.return_step(grid) {
            etr[r] = t.travel_energy_kwh;
        }
    }
    let push = |out: &mut Vec<Violation>, field: &str, message: String| {
        out.push(Violation {
            field: field.into(),
            message,
        });
    };

    for (t, &etr_t) in etr.iter().enumerate() {
        let (c, d) = (schedule.c_kw[t], schedule.d_kw[t]);
        let (bc, bd) = (schedule.bsup_c_kw[t], schedule.bsup_d_kw[t]);
        if c < -tol || d < -tol || bc < -tol || bd < -tol {
            push(&mut out, "power", format!("step {t}: negative power value"));
        }
        if c * d != 0.0 {
            push(
                &mut out,
                "c*d",
                format!("step {t}: simultaneous charge {c} and discharge {d}"),
            );
        }
        if !schedule.connected[t] && (c > tol || d > tol || bc > tol || bd > tol) {
            push(
                &mut out,
                "connected",
                format!("step {t}: power scheduled while away"),
            );
        }
        if schedule.e_kwh[t] < ev.e_min_kwh - tol || schedule.e_kwh[t] > ev.e_max_kwh + tol {
            push(
                &mut out,
                "e_kwh",
                format!("step {t}: energy {} outside bounds", schedule.e_kwh[t]),
            );
        }
        let prev = if t == 0 {
            start_energy_kwh
        } else {
            schedule.e_kwh[t - 1]
        };
        let expected = prev + c * dt * ev.eta_c - d * dt / ev.eta_d - etr_t;
        if (schedule.e_kwh[t] - expected).abs() > tol {
            push(
                &mut out,
                "energy_balance",
                format!(
                    "step {t}: energy {} does not match balance {}",
                    schedule.e_kwh[t], expected
                ),
            );
        }
        if schedule.connected[t] {
            let sustain = prev.min(schedule.e_kwh[t]) + c * dt * ev.eta_c
                - (d + bd) * ev.t_sustain_h / ev.eta_d;
            if sustain < ev.e_min_kwh - tol {
                push(
                    &mut out,
                    "sustain",
                    format!("step {t}: sustain margin {sustain} below e_min"),
                );
            }
        }
    }
    if let Some(t) = trip {
        let at_departure = if t.start_step == 0 {
            start_energy_kwh
        } else {
            schedule.e_kwh[t.start_step - 1]
        };
        if (at_departure - ev.e_req_kwh).abs() > tol {
            push(
                &mut out,
                "departure",
                format!(
                    "entering departure step {} with {} kWh, required {}",
                    t.start_step, at_departure, ev.e_req_kwh
                ),
            );
        }
    }
    if schedule.e_kwh[steps - 1] < ev.e_end_min_kwh - tol {
        push(
            &mut out,
            "terminal",
            format!(
                "horizon ends at {} kWh, below e_end_min {}",
                schedule.e_kwh[steps - 1],
                ev.e_end_min_kwh
            ),
        );
    }
    out
}

/// Schedule CSV with the documented header, power/energy to 3 decimals.
pub fn schedule_csv(schedule: &Schedule) -> String {
    let mut out = String::from("step,connected,c_kw,d_kw,bsup_c_kw,bsup_d_kw,e_kwh\n");
    for t in 0..schedule.c_kw.len() {
        out.push_str(&format!(
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
            t,
            schedule.connected[t],
            schedule.c_kw[t],
            schedule.d_kw[t],
            schedule.bsup_c_kw[t],
            schedule.bsup_d_kw[t],
            schedule.e_kwh[t]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_grid() -> TimeGrid {
        TimeGrid {
            step_count: 2,
            step_hours: 1.0,
            start_hour_of_day: 0,
        }
    }

    /// Lossless 2-step fixture with free energy and £1/kW/h availability.
    fn toy_ev() -> EvParams {
        EvParams {
            e_min_kwh: 0.0,
            e_max_kwh: 20.0,
            p_max_kw: 10.0,
            eta_c: 1.0,
            eta_d: 1.0,
            e_start_kwh: 10.0,
            e_req_kwh: 10.0,
            e_end_min_kwh: 0.0,
            t_sustain_h: 1.0,
            delta_penalty: 0.0,
        }
    }

    fn exact_opts() -> SolveOptions {
        SolveOptions {
            mip_gap: 0.0,
            ..SolveOptions::default()
        }
    }

    #[test]
    fn toy_two_step_optimum_is_thirty_pounds() {
        let grid = toy_grid();
        let prices = PriceSeries::constant(2, 0.0, 0.0, 1.0);
        let sol = solve_day(
            &toy_ev(),
            None,
            &prices,
            ScenarioKind::FutureFr,
            &grid,
            &exact_opts(),
        )
        .unwrap();
        assert!(
            (sol.schedule.revenue_net_gbp - 30.0).abs() < 1e-9,
            "revenue {}",
            sol.schedule.revenue_net_gbp
        );
        assert!((sol.schedule.revenue_fr_gbp - 30.0).abs() < 1e-9);
        assert!(sol.schedule.cost_energy_gbp.abs() < 1e-9);
        let violations = verify_schedule(&sol.schedule, &toy_ev(), &grid, None, 10.0);
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn toy_without_fr_revenue_is_zero() {
        let grid = toy_grid();
        let prices = PriceSeries::constant(2, 0.05, 0.0, 0.0);
        let sol = solve_day(
            &toy_ev(),
            None,
            &prices,
            ScenarioKind::FutureFr,
            &grid,
            &exact_opts(),
        )
        .unwrap();
        assert!(sol.schedule.revenue_net_gbp.abs() < 1e-9);
        assert!(sol.schedule.c_kw.iter().all(|&c| c.abs() < 1e-9));
    }

    #[test]
    fn away_all_day_forces_zero_schedule() {
        let grid = TimeGrid::default();
        let ev = EvParams {
            e_start_kwh: 38.0,
            e_req_kwh: 38.0,
            e_end_min_kwh: 4.0,
            ..EvParams::default()
        };
        let trip = PlannedTrip {
            start_step: 0,
            duration_steps: 24,
            travel_energy_kwh: 5.0,
        };
        let prices = PriceSeries::constant(24, 0.04, 0.0, 0.05);
        let sol = solve_day(
            &ev,
            Some(&trip),
            &prices,
            ScenarioKind::FutureFr,
            &grid,
            &exact_opts(),
        )
        .unwrap();
        assert!(sol.schedule.c_kw.iter().all(|&x| x == 0.0));
        assert!(sol.schedule.d_kw.iter().all(|&x| x == 0.0));
        assert!(sol.schedule.bsup_c_kw.iter().all(|&x| x == 0.0));
        assert!(sol.schedule.bsup_d_kw.iter().all(|&x| x == 0.0));
        assert!(sol.objective_gbp.abs() < 1e-9);
    }

    #[test]
    fn dumb_policy_matches_worked_arithmetic() {
        // Return at step 10 with 30 kWh on board, 38 required, 7 kW charger,
        // eta 0.9: draws 7 kW then 1.889 kW.
        let grid = TimeGrid::default();
        let ev = EvParams {
            e_min_kwh: 0.0,
            e_max_kwh: 40.0,
            p_max_kw: 7.0,
            eta_c: 0.9,
            eta_d: 0.9,
            e_start_kwh: 38.0,
            e_req_kwh: 38.0,
            e_end_min_kwh: 0.0,
            t_sustain_h: 0.5,
            delta_penalty: 0.5,
        };
        let trip = PlannedTrip {
            start_step: 4,
            duration_steps: 6,
            travel_energy_kwh: 8.0,
        };
        let prices = PriceSeries::constant(24, 0.05, 0.0, 0.0);
        let mask: Vec<bool> = (0..24).map(|s| !(4..10).contains(&s)).collect();
        let sol =
            dumb_charge_schedule(&ev, &mask, &prices, &grid, Some(&trip), &exact_opts()).unwrap();
        assert!((sol.schedule.c_kw[10] - 7.0).abs() < 1e-9);
        assert!((sol.schedule.c_kw[11] - 1.7 / 0.9).abs() < 1e-9);
        assert!(sol.schedule.c_kw[12].abs() < 1e-12);
        assert!((sol.schedule.e_kwh[23] - 38.0).abs() < 1e-9);
        assert!(sol.warnings.is_empty());
    }

    #[test]
    fn dumb_already_at_required_level_stays_idle() {
        let grid = TimeGrid::default();
        let ev = EvParams {
            e_start_kwh: 38.0,
            ..EvParams::default()
        };
        let prices = PriceSeries::constant(24, 0.05, 0.0, 0.0);
        let mask = vec![true; 24];
        let sol = dumb_charge_schedule(&ev, &mask, &prices, &grid, None, &exact_opts()).unwrap();
        assert!(sol.schedule.c_kw.iter().all(|&c| c == 0.0));
        assert_eq!(sol.schedule.cost_energy_gbp, 0.0);
    }

    #[test]
    fn dumb_cost_is_price_independent_of_timing() {
        // Constant buy price p: cost = energy drawn / eta_c * p.
        let grid = TimeGrid::default();
        let ev = EvParams::default();
        let p = 0.07;
        let prices = PriceSeries::constant(24, p, 0.0, 0.0);
        let trip = PlannedTrip {
            start_step: 2,
            duration_steps: 5,
            travel_energy_kwh: 6.0,
        };
        let mask: Vec<bool> = (0..24).map(|s| !(2..7).contains(&s)).collect();
        let sol =
            dumb_charge_schedule(&ev, &mask, &prices, &grid, Some(&trip), &exact_opts()).unwrap();
        // Pre-departure top-up from the raised start plus post-trip recharge.
        let start = effective_start_energy(&ev, Some(&trip), &grid, true);
        let expected = ((ev.e_req_kwh - start) + trip.travel_energy_kwh) / ev.eta_c * p;
        assert!(
            (sol.schedule.cost_energy_gbp - expected).abs() < 1e-9,
            "cost {} vs {}",
            sol.schedule.cost_energy_gbp,
            expected
        );
    }

    #[test]
    fn infeasible_departure_names_step_and_shortfall() {
        let grid = TimeGrid::default();
        let ev = EvParams {
            e_start_kwh: 20.0,
            ..EvParams::default()
        };
        let trip = PlannedTrip {
            start_step: 1,
            duration_steps: 6,
            travel_energy_kwh: 5.0,
        };
        let prices = PriceSeries::constant(24, 0.04, 0.0, 0.0);
        let opts = SolveOptions {
            raise_start_soc: false,
            mip_gap: 0.0,
            ..SolveOptions::default()
        };
        let err = solve_day(
            &ev,
            Some(&trip),
            &prices,
            ScenarioKind::SmartCharging,
            &grid,
            &opts,
        )
        .unwrap_err();
        match err {
            ChargingError::Infeasible {
                departure_step,
                shortfall_kwh,
            } => {
                assert_eq!(departure_step, Some(1));
                // Can add at most 9 kWh in one step; 38 - 29 = 9 short.
                let s = shortfall_kwh.expect("shortfall");
                assert!((s - 9.0).abs() < 1e-6, "shortfall {s}");
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn raised_start_energy_makes_original_departure_feasible() {
        let grid = TimeGrid::default();
        let ev = EvParams::default();
        let trip = PlannedTrip {
            start_step: 1,
            duration_steps: 6,
            travel_energy_kwh: 5.0,
        };
        assert!((effective_start_energy(&ev, Some(&trip), &grid, true) - 29.0).abs() < 1e-9);
        let prices = PriceSeries::constant(24, 0.04, 0.0, 0.0);
        let sol = solve_day(
            &ev,
            Some(&trip),
            &prices,
            ScenarioKind::SmartCharging,
            &grid,
            &exact_opts(),
        )
        .unwrap();
        let violations =
            verify_schedule(&sol.schedule, &ev, &grid, Some(&trip), sol.start_energy_kwh);
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn smart_charging_model_has_no_binaries() {
        let grid = TimeGrid::default();
        let ev = EvParams::default();
        let prices = PriceSeries::constant(24, 0.04, 0.0, 0.0);
        let mask = vec![true; 24];
        let handle = build_day_model(
            &ev,
            &mask,
            &prices,
            ScenarioKind::SmartCharging,
            None,
            &grid,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(handle.model.binaries().is_empty());
    }

    #[test]
    fn schedule_csv_has_documented_header() {
        let s = Schedule::idle(2, vec![true, true], 5.0);
        let csv = schedule_csv(&s);
        assert!(csv.starts_with("step,connected,c_kw,d_kw,bsup_c_kw,bsup_d_kw,e_kwh\n"));
        assert!(csv.contains("0,true,0.000,0.000,0.000,0.000,5.000"));
    }
}

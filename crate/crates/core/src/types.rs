//! Shared domain types: time grid, EV physical parameters, trips, prices,
//! operating scenarios and decoded schedules.
//!
//! All types are plain data, immutable after construction and safe to share
//! across worker threads. Validation is centralised in [`validate`], which
//! reports every violated invariant instead of failing on the first.

use serde::{Deserialize, Serialize};

/// Discretisation of the scheduling horizon.
///
/// The end-of-step convention is used throughout: `energy[t]` is the battery
/// level at the *end* of step `t`, and the level entering step 0 is
/// `EvParams::e_start_kwh`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Number of steps in the horizon.
    pub step_count: usize,
    /// Length of one step in hours.
    pub step_hours: f64,
    /// Hour of day at which step 0 begins (0-23). Informational: used when
    /// mapping wall-clock hours to step indices.
    pub start_hour_of_day: u32,
}

impl TimeGrid {
    /// Hourly day-ahead grid starting at the given hour of day.
    pub fn hourly_day(start_hour_of_day: u32) -> Self {
        TimeGrid {
            step_count: 24,
            step_hours: 1.0,
            start_hour_of_day,
        }
    }

    /// Horizon length in hours.
    pub fn horizon_hours(&self) -> f64 {
        self.step_count as f64 * self.step_hours
    }

    /// Whether this grid spans exactly 24 hours. Day-ahead entry points
    /// enforce this; short grids remain usable for tests and fixtures.
    pub fn is_day_ahead(&self) -> bool {
        (self.horizon_hours() - 24.0).abs() < 1e-9
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::hourly_day(7)
    }
}

/// Battery and charger limits for one EV, plus the operator's energy
/// requirements for the day.
///
/// The numeric defaults for capacity, charger rating, efficiencies and the
/// sustain time are project defaults (configurable), not measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvParams {
    /// Minimum admissible battery energy (kWh).
    pub e_min_kwh: f64,
    /// Battery capacity (kWh).
    pub e_max_kwh: f64,
    /// Charger power rating, applies to charge and discharge (kW).
    pub p_max_kw: f64,
    /// Charging efficiency in (0, 1].
    pub eta_c: f64,
    /// Discharging efficiency in (0, 1].
    pub eta_d: f64,
    /// Battery energy entering the horizon (kWh).
    pub e_start_kwh: f64,
    /// Energy required at trip departure (kWh).
    pub e_req_kwh: f64,
    /// Minimum energy at the end of the horizon (kWh), so consecutive days
    /// remain feasible.
    pub e_end_min_kwh: f64,
    /// Minimum time an upward balancing service must be sustainable for if
    /// called (hours).
    pub t_sustain_h: f64,
    /// Discharge penalty weight, dimensionless. Zero disables the penalty.
    pub delta_penalty: f64,
}

impl Default for EvParams {
    fn default() -> Self {
        let e_max = 40.0;
        EvParams {
            e_min_kwh: 0.1 * e_max,
            e_max_kwh: e_max,
            p_max_kw: 10.0,
            eta_c: 0.9,
            eta_d: 0.9,
            e_start_kwh: 0.5 * e_max,
            e_req_kwh: 0.95 * e_max,
            e_end_min_kwh: 0.5 * e_max,
            t_sustain_h: 0.5,
            delta_penalty: 0.5,
        }
    }
}

/// One scheduled trip: how long it takes, how much energy it uses and in
/// which window it may be placed.
///
/// `window_end_step` is the latest step boundary by which the EV must be back
/// on the charger: a start `s` is permissible iff
/// `window_start_step <= s && s + duration_steps <= window_end_step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripSpec {
    /// Trip length in whole steps.
    pub duration_steps: usize,
    /// Energy consumed by the trip (kWh), deducted at the return step.
    pub travel_energy_kwh: f64,
    /// First step at which the trip may start.
    pub window_start_step: usize,
    /// Latest permissible return boundary (exclusive end of the travel window).
    pub window_end_step: usize,
    /// Start step of the trip as originally scheduled by the operator.
    pub original_start_step: usize,
}

/// Per-step price vectors. Buy/sell are energy prices in £/kWh; `fr` is the
/// availability price for upward balancing service in £/kW/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
    pub fr: Vec<f64>,
}

impl PriceSeries {
    /// Constant prices across the horizon.
    pub fn constant(steps: usize, buy: f64, sell: f64, fr: f64) -> Self {
        PriceSeries {
            buy: vec![buy; steps],
            sell: vec![sell; steps],
            fr: vec![fr; steps],
        }
    }

    /// All three series scaled by `alpha` (sensitivity studies).
    pub fn scaled(&self, alpha: f64) -> Self {
        let f = |v: &[f64]| v.iter().map(|x| x * alpha).collect();
        PriceSeries {
            buy: f(&self.buy),
            sell: f(&self.sell),
            fr: f(&self.fr),
        }
    }
}

/// Operating mode of the fleet for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Charge to the required level immediately on return, price-blind.
    DumbCharging,
    /// Cost-minimising charging; no discharge, no balancing services.
    SmartCharging,
    /// V2G with frequency response at today's flat availability prices.
    CurrentFr,
    /// V2G with frequency response priced from projected system conditions.
    FutureFr,
}

impl ScenarioKind {
    /// Discharge to the grid allowed.
    pub fn v2g_enabled(self) -> bool {
        matches!(self, ScenarioKind::CurrentFr | ScenarioKind::FutureFr)
    }

    /// Balancing-service availability terms allowed.
    pub fn fr_enabled(self) -> bool {
        matches!(self, ScenarioKind::CurrentFr | ScenarioKind::FutureFr)
    }

    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::DumbCharging,
        ScenarioKind::SmartCharging,
        ScenarioKind::CurrentFr,
        ScenarioKind::FutureFr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::DumbCharging => "dumb",
            ScenarioKind::SmartCharging => "smart",
            ScenarioKind::CurrentFr => "current-fr",
            ScenarioKind::FutureFr => "future-fr",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dumb" | "dumb-charging" => Ok(ScenarioKind::DumbCharging),
            "smart" | "smart-charging" => Ok(ScenarioKind::SmartCharging),
            "current-fr" => Ok(ScenarioKind::CurrentFr),
            "future-fr" => Ok(ScenarioKind::FutureFr),
            other => Err(format!(
                "unknown scenario '{other}' (expected dumb, smart, current-fr or future-fr)"
            )),
        }
    }
}

/// Decoded per-step operating plan for one EV-day, plus the revenue breakdown.
///
/// Power values are in kW, energy in kWh (end of step). The discharge penalty
/// is reported separately and is *not* part of `revenue_net_gbp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub c_kw: Vec<f64>,
    pub d_kw: Vec<f64>,
    pub bsup_c_kw: Vec<f64>,
    pub bsup_d_kw: Vec<f64>,
    pub e_kwh: Vec<f64>,
    pub connected: Vec<bool>,
    /// Availability revenue from balancing services (£).
    pub revenue_fr_gbp: f64,
    /// Net energy cost: buy cost minus any sell revenue (£).
    pub cost_energy_gbp: f64,
    /// Discharge penalty charged inside the solver objective (£).
    pub penalty_gbp: f64,
    /// `revenue_fr_gbp - cost_energy_gbp`.
    pub revenue_net_gbp: f64,
}

impl Schedule {
    /// All-zero schedule over `steps` steps with the given connectivity and a
    /// flat battery trace at `e_kwh`.
    pub fn idle(steps: usize, connected: Vec<bool>, e_kwh: f64) -> Self {
        Schedule {
            c_kw: vec![0.0; steps],
            d_kw: vec![0.0; steps],
            bsup_c_kw: vec![0.0; steps],
            bsup_d_kw: vec![0.0; steps],
            e_kwh: vec![e_kwh; steps],
            connected,
            revenue_fr_gbp: 0.0,
            cost_energy_gbp: 0.0,
            penalty_gbp: 0.0,
            revenue_net_gbp: 0.0,
        }
    }

    /// Total discharged energy at the battery terminals (kWh).
    pub fn total_discharged_kwh(&self, step_hours: f64) -> f64 {
        self.d_kw.iter().map(|d| d * step_hours).sum()
    }
}

/// A single violated invariant, named after the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn check(out: &mut Vec<Violation>, ok: bool, field: &str, message: impl Into<String>) {
    if !ok {
        out.push(Violation::new(field, message));
    }
}

/// Validate a time grid on its own.
pub fn validate_grid(grid: &TimeGrid) -> Vec<Violation> {
    let mut v = Vec::new();
    check(
        &mut v,
        grid.step_count >= 2,
        "step_count",
        format!("must be >= 2, got {}", grid.step_count),
    );
    check(
        &mut v,
        grid.step_hours > 0.0 && grid.step_hours.is_finite(),
        "step_hours",
        format!("must be > 0, got {}", grid.step_hours),
    );
    check(
        &mut v,
        grid.start_hour_of_day < 24,
        "start_hour_of_day",
        format!("must be in [0, 23], got {}", grid.start_hour_of_day),
    );
    v
}

/// Validate EV parameters on their own.
pub fn validate_ev(ev: &EvParams) -> Vec<Violation> {
    let mut v = Vec::new();
    check(
        &mut v,
        ev.e_min_kwh >= 0.0,
        "e_min_kwh",
        format!("must be >= 0, got {}", ev.e_min_kwh),
    );
    check(
        &mut v,
        ev.e_min_kwh <= ev.e_start_kwh && ev.e_start_kwh <= ev.e_max_kwh,
        "e_start_kwh",
        format!(
            "must satisfy e_min <= e_start <= e_max, got {} outside [{}, {}]",
            ev.e_start_kwh, ev.e_min_kwh, ev.e_max_kwh
        ),
    );
    check(
        &mut v,
        ev.e_min_kwh <= ev.e_req_kwh && ev.e_req_kwh <= ev.e_max_kwh,
        "e_req_kwh",
        format!(
            "must lie in [e_min, e_max] = [{}, {}], got {}",
            ev.e_min_kwh, ev.e_max_kwh, ev.e_req_kwh
        ),
    );
    check(
        &mut v,
        ev.e_min_kwh <= ev.e_end_min_kwh && ev.e_end_min_kwh <= ev.e_max_kwh,
        "e_end_min_kwh",
        format!(
            "must lie in [e_min, e_max] = [{}, {}], got {}",
            ev.e_min_kwh, ev.e_max_kwh, ev.e_end_min_kwh
        ),
    );
    check(
        &mut v,
        ev.p_max_kw > 0.0,
        "p_max_kw",
        format!("must be > 0, got {}", ev.p_max_kw),
    );
    check(
        &mut v,
        ev.eta_c > 0.0 && ev.eta_c <= 1.0,
        "eta_c",
        format!("must be in (0, 1], got {}", ev.eta_c),
    );
    check(
        &mut v,
        ev.eta_d > 0.0 && ev.eta_d <= 1.0,
        "eta_d",
        format!("must be in (0, 1], got {}", ev.eta_d),
    );
    check(
        &mut v,
        ev.t_sustain_h > 0.0 && ev.t_sustain_h <= 24.0,
        "t_sustain_h",
        format!("must be in (0, 24], got {}", ev.t_sustain_h),
    );
    check(
        &mut v,
        ev.delta_penalty >= 0.0,
        "delta_penalty",
        format!("must be >= 0, got {}", ev.delta_penalty),
    );
    v
}

/// Validate a trip against its grid and the paired EV.
pub fn validate_trip(trip: &TripSpec, ev: &EvParams, grid: &TimeGrid) -> Vec<Violation> {
    let mut v = Vec::new();
    check(
        &mut v,
        trip.duration_steps >= 1,
        "duration_steps",
        "must be >= 1",
    );
    check(
        &mut v,
        trip.window_start_step <= trip.original_start_step,
        "original_start_step",
        format!(
            "window_start_step ({}) must not exceed original_start_step ({})",
            trip.window_start_step, trip.original_start_step
        ),
    );
    check(
        &mut v,
        trip.original_start_step + trip.duration_steps <= trip.window_end_step,
        "window_end_step",
        format!(
            "original trip [{}, {}) must end within the travel window (end {})",
            trip.original_start_step,
            trip.original_start_step + trip.duration_steps,
            trip.window_end_step
        ),
    );
    check(
        &mut v,
        trip.window_end_step <= grid.step_count,
        "window_end_step",
        format!(
            "travel window end ({}) exceeds the horizon ({} steps)",
            trip.window_end_step, grid.step_count
        ),
    );
    check(
        &mut v,
        trip.travel_energy_kwh >= 0.0,
        "travel_energy_kwh",
        format!("must be >= 0, got {}", trip.travel_energy_kwh),
    );
    check(
        &mut v,
        trip.travel_energy_kwh <= ev.e_req_kwh - ev.e_min_kwh,
        "travel_energy_kwh",
        format!(
            "trip infeasible: travel energy {} exceeds e_req - e_min = {}",
            trip.travel_energy_kwh,
            ev.e_req_kwh - ev.e_min_kwh
        ),
    );
    v
}

/// Validate a price series against its grid.
pub fn validate_prices(prices: &PriceSeries, grid: &TimeGrid) -> Vec<Violation> {
    let mut v = Vec::new();
    for (name, series) in [
        ("buy", &prices.buy),
        ("sell", &prices.sell),
        ("fr", &prices.fr),
    ] {
        check(
            &mut v,
            series.len() == grid.step_count,
            name,
            format!(
                "length {} does not match step_count {}",
                series.len(),
                grid.step_count
            ),
        );
        check(
            &mut v,
            series.iter().all(|x| x.is_finite()),
            name,
            "contains a non-finite price",
        );
    }
    check(
        &mut v,
        prices.fr.iter().all(|x| *x >= 0.0),
        "fr",
        "availability prices must be >= 0",
    );
    v
}

/// Full cross-validation of one EV-day. Returns every violated invariant;
/// an empty list means the inputs are consistent.
pub fn validate(
    ev: &EvParams,
    trip: &TripSpec,
    prices: &PriceSeries,
    grid: &TimeGrid,
) -> Vec<Violation> {
    let mut v = validate_grid(grid);
    v.extend(validate_ev(ev));
    v.extend(validate_trip(trip, ev, grid));
    v.extend(validate_prices(prices, grid));
    v
}

/// Grid-connection mask for a trip placed at `start_step`: `true` where the
/// EV is on the charger, `false` for the `duration_steps` steps of the trip.
pub fn derive_grid_mask(
    grid: &TimeGrid,
    trip: &TripSpec,
    start_step: usize,
) -> Result<Vec<bool>, Violation> {
    if start_step + trip.duration_steps > grid.step_count {
        return Err(Violation::new(
            "start_step",
            format!(
                "trip [{}, {}) does not fit in a {}-step horizon",
                start_step,
                start_step + trip.duration_steps,
                grid.step_count
            ),
        ));
    }
    let mut mask = vec![true; grid.step_count];
    for m in mask.iter_mut().skip(start_step).take(trip.duration_steps) {
        *m = false;
    }
    Ok(mask)
}

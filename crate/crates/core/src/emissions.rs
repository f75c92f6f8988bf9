//! CCGTs and CO₂ avoided by fleet-provided fast frequency response.
//!
//! When EVs supply part of the Dynamic Containment volume, the synchronous
//! plant that was standing by to provide inertia and primary response can be
//! released. The nadir condition is re-solved hour by hour for the number of
//! gas plants `x` whose combined inertia and primary response exactly
//! restores the balance; `x` averaged over the month converts to CO₂ at the
//! plants' emission rate.

use crate::fr_prices::SystemParams;
use crate::types::Violation;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// Parameters of the marginal gas plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcgtParams {
    /// Plant capacity (MW).
    pub capacity_mw: f64,
    /// Inertia constant (s); plant inertia is `capacity * inertia_constant`.
    pub inertia_constant_s: f64,
    /// Primary response one plant can hold (MW), at most 15% of capacity.
    pub pfr_per_plant_mw: f64,
    /// Minimum stable generation while providing response (MW).
    pub min_stable_mw: f64,
    /// Emission rate (kg CO₂ equivalent per kWh generated).
    pub emission_rate_kg_per_kwh: f64,
}

impl Default for CcgtParams {
    fn default() -> Self {
        CcgtParams {
            capacity_mw: 500.0,
            inertia_constant_s: 5.0,
            pfr_per_plant_mw: 75.0,
            min_stable_mw: 250.0,
            emission_rate_kg_per_kwh: 0.368,
        }
    }
}

impl CcgtParams {
    /// Inertia contributed by one plant (MVA·s).
    pub fn h_per_plant(&self) -> f64 {
        self.capacity_mw * self.inertia_constant_s
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.pfr_per_plant_mw > 0.15 * self.capacity_mw + 1e-9 {
            v.push(Violation {
                field: "pfr_per_plant_mw".into(),
                message: format!(
                    "{} exceeds 15% of capacity ({})",
                    self.pfr_per_plant_mw,
                    0.15 * self.capacity_mw
                ),
            });
        }
        for (field, value) in [
            ("capacity_mw", self.capacity_mw),
            ("inertia_constant_s", self.inertia_constant_s),
            ("pfr_per_plant_mw", self.pfr_per_plant_mw),
            ("min_stable_mw", self.min_stable_mw),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                v.push(Violation {
                    field: field.into(),
                    message: format!("must be strictly positive, got {value}"),
                });
            }
        }
        if self.emission_rate_kg_per_kwh < 0.0 {
            v.push(Violation {
                field: "emission_rate_kg_per_kwh".into(),
                message: "must be >= 0".into(),
            });
        }
        v
    }
}

/// Calibrated system state for one hour: the nadir condition holds with
/// equality at these values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineHour {
    pub inertia_mva_s: f64,
    pub pfr_mw: f64,
    pub dc_mw: f64,
}

#[derive(Debug, Error)]
pub enum EmissionsError {
    #[error("invalid CCGT parameters: {0:?}")]
    InvalidParams(Vec<Violation>),
    #[error("baseline not calibrated: {0}")]
    NotCalibrated(String),
    #[error("EV DC contribution {dc_ev} MW outside [0, {dc_total}]")]
    DcOutOfRange { dc_ev: f64, dc_total: f64 },
}

const X_MAX: f64 = 200.0;

/// Nadir-condition residual as a function of the number of plants released.
fn residual(
    x: f64,
    baseline: &BaselineHour,
    dc_ev: f64,
    sys: &SystemParams,
    c: &CcgtParams,
) -> f64 {
    let four_df = 4.0 * sys.delta_f_max_hz;
    let dc_remaining = baseline.dc_mw - dc_ev;
    let lhs = ((baseline.inertia_mva_s + x * c.h_per_plant()) / sys.f0_hz - dc_remaining / four_df)
        * (baseline.pfr_mw + x * c.pfr_per_plant_mw)
        / 10.0;
    let rhs = (sys.p_infeed_mw - dc_remaining).powi(2) / four_df;
    lhs - rhs
}

/// Plants (real-valued) released by `dc_ev` MW of EV-provided DC, found by
/// bisection on `[0, 200]` to a relative residual of 1e-6.
pub fn ccgts_avoided(
    baseline: &BaselineHour,
    dc_ev_mw: f64,
    sys: &SystemParams,
    c: &CcgtParams,
) -> Result<f64, EmissionsError> {
    let issues = c.validate();
    if !issues.is_empty() {
        return Err(EmissionsError::InvalidParams(issues));
    }
    if dc_ev_mw < 0.0 || dc_ev_mw > baseline.dc_mw {
        return Err(EmissionsError::DcOutOfRange {
            dc_ev: dc_ev_mw,
            dc_total: baseline.dc_mw,
        });
    }

    let four_df = 4.0 * sys.delta_f_max_hz;
    let rhs_scale = ((sys.p_infeed_mw - (baseline.dc_mw - dc_ev_mw)).powi(2) / four_df).abs();
    let tol = 1e-6 * rhs_scale.max(1.0);

    let f0 = residual(0.0, baseline, dc_ev_mw, sys, c);
    if f0.abs() <= tol {
        return Ok(0.0);
    }
    if f0 > 0.0 {
        return Err(EmissionsError::NotCalibrated(format!(
            "baseline already over-satisfies the nadir condition by {f0:.3}"
        )));
    }
    let f_hi = residual(X_MAX, baseline, dc_ev_mw, sys, c);
    if f_hi < 0.0 {
        return Err(EmissionsError::NotCalibrated(format!(
            "no root in [0, {X_MAX}]: residual at the cap is {f_hi:.3}"
        )));
    }

    let (mut lo, mut hi) = (0.0, X_MAX);
    for _ in 0..200 {
        let midpoint = 0.5 * (lo + hi);
        let f_mid = residual(midpoint, baseline, dc_ev_mw, sys, c);
        if f_mid.abs() <= tol {
            return Ok(midpoint);
        }
        if f_mid < 0.0 {
            lo = midpoint;
        } else {
            hi = midpoint;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form cross-check: positive root of the quadratic obtained by
/// expanding the nadir condition in `x`. `None` when no nonnegative real
/// root exists.
pub fn ccgts_avoided_quadratic(
    baseline: &BaselineHour,
    dc_ev_mw: f64,
    sys: &SystemParams,
    c: &CcgtParams,
) -> Option<f64> {
    let four_df = 4.0 * sys.delta_f_max_hz;
    let dc_remaining = baseline.dc_mw - dc_ev_mw;
    let a_coef = c.h_per_plant() / sys.f0_hz;
    let b_coef = baseline.inertia_mva_s / sys.f0_hz - dc_remaining / four_df;
    let p = c.pfr_per_plant_mw;
    let q = baseline.pfr_mw;
    let r = 10.0 * (sys.p_infeed_mw - dc_remaining).powi(2) / four_df;

    // (b + a x)(q + p x) = r  =>  a p x^2 + (a q + b p) x + (b q - r) = 0
    let qa = a_coef * p;
    let qb = a_coef * q + b_coef * p;
    let qc = b_coef * q - r;
    if qa.abs() < 1e-15 {
        if qb.abs() < 1e-15 {
            return None;
        }
        let x = -qc / qb;
        return (x >= 0.0).then_some(x);
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let x = (-qb + disc.sqrt()) / (2.0 * qa);
    (x >= 0.0).then_some(x)
}

/// Convert a mean released-plant count into kg of CO₂ over `hours`.
///
/// `energy_basis_mw` is the generation level attributed to each released
/// plant; it is an explicit parameter rather than a
/// derived constant because no single generation level is implied by the
/// release count alone.
pub fn co2_avoided_kg(x_mean: f64, hours: f64, c: &CcgtParams, energy_basis_mw: f64) -> f64 {
    x_mean * energy_basis_mw * hours * c.emission_rate_kg_per_kwh * 1000.0
}

/// One row of the emissions report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmissionsHour {
    pub hour: usize,
    pub dc_ev_mw: f64,
    pub x_avoided: f64,
}

/// Write the emissions report CSV: `hour,dc_ev_mw,x_avoided`.
pub fn write_emissions_csv(mut w: impl Write, rows: &[EmissionsHour]) -> std::io::Result<()> {
    writeln!(w, "hour,dc_ev_mw,x_avoided")?;
    for row in rows {
        writeln!(w, "{},{:.3},{:.4}", row.hour, row.dc_ev_mw, row.x_avoided)?;
    }
    Ok(())
}

//! TOML run configuration: EV parameter defaults, scenario selection,
//! prices, solver knobs and output settings. Every key has a default, so a
//! minimal config file can be empty.

use crate::charging::{DischargeTerm, SolveOptions};
use crate::emissions::CcgtParams;
use crate::fleet_synth::FleetKind;
use crate::fr_prices::{Season, SystemParams};
use crate::types::{EvParams, ScenarioKind, TimeGrid, Violation};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grid: GridConfig,
    pub ev: EvConfig,
    pub penalty: PenaltyConfig,
    pub solver: SolverConfig,
    pub scenarios: ScenariosConfig,
    pub fleet: FleetConfig,
    pub prices: PricesConfig,
    pub system: SystemParams,
    pub emissions: EmissionsConfig,
    pub run: RunSection,
    pub trip: Option<TripConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: 1,
            grid: GridConfig::default(),
            ev: EvConfig::default(),
            penalty: PenaltyConfig::default(),
            solver: SolverConfig::default(),
            scenarios: ScenariosConfig::default(),
            fleet: FleetConfig::default(),
            prices: PricesConfig::default(),
            system: SystemParams::default(),
            emissions: EmissionsConfig::default(),
            run: RunSection::default(),
            trip: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub step_count: usize,
    pub step_hours: f64,
    pub start_hour_of_day: u32,
    /// Allow horizons that do not span 24 hours (test fixtures only).
    pub allow_short_horizon: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            step_count: 24,
            step_hours: 1.0,
            start_hour_of_day: 7,
            allow_short_horizon: false,
        }
    }
}

/// EV parameters as capacity fractions where natural, converted to
/// [`EvParams`] by [`RunConfig::ev_params`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvConfig {
    pub e_max_kwh: f64,
    pub e_min_frac: f64,
    pub p_max_kw: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub e_start_frac: f64,
    pub e_req_frac: f64,
    pub e_end_min_frac: f64,
    pub t_sustain_h: f64,
    pub delta_penalty: f64,
    /// Raise the start-of-day energy when the original departure would
    /// otherwise be unreachable.
    pub raise_start_soc: bool,
}

impl Default for EvConfig {
    fn default() -> Self {
        EvConfig {
            e_max_kwh: 40.0,
            e_min_frac: 0.1,
            p_max_kw: 10.0,
            eta_c: 0.9,
            eta_d: 0.9,
            e_start_frac: 0.5,
            e_req_frac: 0.95,
            e_end_min_frac: 0.5,
            t_sustain_h: 0.5,
            delta_penalty: 0.5,
            raise_start_soc: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// "unit", "sell" or "none".
    pub mode: String,
    pub unit_price_gbp_per_kwh: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            mode: "unit".into(),
            unit_price_gbp_per_kwh: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mip_gap: f64,
    pub node_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mip_gap: 0.001,
            node_limit: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenariosConfig {
    pub kinds: Vec<ScenarioKind>,
    pub current_dc_price_gbp_per_mw_h: f64,
}

impl Default for ScenariosConfig {
    fn default() -> Self {
        ScenariosConfig {
            kinds: ScenarioKind::ALL.to_vec(),
            // Flat availability price for the current product; indicative
            // figure, configurable.
            current_dc_price_gbp_per_mw_h: 17.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub kind: FleetKind,
    pub season: Season,
    pub n: usize,
    /// Optional fleet CSV; synthetic generation is used when empty.
    pub csv: String,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            kind: FleetKind::Maintenance,
            season: Season::Summer,
            n: 100,
            csv: String::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricesConfig {
    /// Optional energy price CSV; a built-in seasonal curve when empty.
    pub energy_csv: String,
    /// Optional system profile CSV; a built-in synthetic profile when empty.
    pub profile_csv: String,
    /// Use the extreme-weather variant of the built-in profile.
    pub extreme_day: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmissionsConfig {
    pub ccgt: CcgtParams,
    /// Generation attributed to each released plant (MW).
    pub energy_basis_mw: f64,
    pub hours_per_month: f64,
    /// Fleet size the per-run DC contribution is scaled to.
    pub fleet_scale: usize,
}

impl Default for EmissionsConfig {
    fn default() -> Self {
        EmissionsConfig {
            ccgt: CcgtParams::default(),
            energy_basis_mw: 250.0,
            hours_per_month: 720.0,
            fleet_scale: 5000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: String,
    /// Worker threads; 0 uses the number of CPUs.
    pub jobs: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            out_dir: "out".into(),
            jobs: 0,
            seed: 7,
        }
    }
}

/// A single trip for the `schedule` subcommand.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripConfig {
    pub duration_steps: usize,
    pub travel_energy_kwh: f64,
    pub window_start_step: usize,
    pub window_end_step: usize,
    pub original_start_step: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = crate::types::validate_grid(&self.grid());
        if !self.grid.allow_short_horizon && !self.grid().is_day_ahead() {
            v.push(Violation {
                field: "grid".into(),
                message: format!(
                    "step_count x step_hours = {} h; day-ahead runs must span 24 h \
                     (set grid.allow_short_horizon = true for fixtures)",
                    self.grid().horizon_hours()
                ),
            });
        }
        v.extend(crate::types::validate_ev(&self.ev_params()));
        if !matches!(self.penalty.mode.as_str(), "unit" | "sell" | "none") {
            v.push(Violation {
                field: "penalty.mode".into(),
                message: format!("unknown mode '{}'", self.penalty.mode),
            });
        }
        if self.scenarios.kinds.is_empty() {
            v.push(Violation {
                field: "scenarios.kinds".into(),
                message: "at least one scenario is required".into(),
            });
        }
        if self.fleet.n == 0 && self.fleet.csv.is_empty() {
            v.push(Violation {
                field: "fleet.n".into(),
                message: "synthetic fleets need n >= 1".into(),
            });
        }
        v.extend(self.system.validate());
        v.extend(self.emissions.ccgt.validate());
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            step_count: self.grid.step_count,
            step_hours: self.grid.step_hours,
            start_hour_of_day: self.grid.start_hour_of_day,
        }
    }

    pub fn ev_params(&self) -> EvParams {
        let e = &self.ev;
        EvParams {
            e_min_kwh: e.e_min_frac * e.e_max_kwh,
            e_max_kwh: e.e_max_kwh,
            p_max_kw: e.p_max_kw,
            eta_c: e.eta_c,
            eta_d: e.eta_d,
            e_start_kwh: e.e_start_frac * e.e_max_kwh,
            e_req_kwh: e.e_req_frac * e.e_max_kwh,
            e_end_min_kwh: e.e_end_min_frac * e.e_max_kwh,
            t_sustain_h: e.t_sustain_h,
            delta_penalty: e.delta_penalty,
        }
    }

    pub fn discharge_term(&self) -> DischargeTerm {
        match self.penalty.mode.as_str() {
            "sell" => DischargeTerm::SellPenalty,
            "none" => DischargeTerm::SellRevenue,
            _ => DischargeTerm::UnitPenalty {
                price_gbp_per_kwh: self.penalty.unit_price_gbp_per_kwh,
            },
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            mip_gap: self.solver.mip_gap,
            node_limit: self.solver.node_limit,
            discharge_term: self.discharge_term(),
            raise_start_soc: self.ev.raise_start_soc,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.run.out_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_match_documented_values() {
        let config = RunConfig::default();
        config.validate().unwrap();
        let ev = config.ev_params();
        assert_eq!(ev.e_max_kwh, 40.0);
        assert_eq!(ev.e_min_kwh, 4.0);
        assert_eq!(ev.e_req_kwh, 38.0);
        assert_eq!(ev.e_start_kwh, 20.0);
        assert_eq!(config.solve_options().mip_gap, 0.001);
    }

    #[test]
    fn empty_toml_is_a_valid_config() {
        let config: RunConfig = toml::from_str("").unwrap();
        config.validate().unwrap();
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let config: RunConfig = toml::from_str(
            r#"
            [ev]
            e_max_kwh = 60.0
            [scenarios]
            kinds = ["future-fr"]
            "#,
        )
        .unwrap();
        assert_eq!(config.ev_params().e_max_kwh, 60.0);
        assert_eq!(config.ev_params().p_max_kw, 10.0);
        assert_eq!(config.scenarios.kinds, vec![ScenarioKind::FutureFr]);
    }

    #[test]
    fn short_horizon_requires_explicit_flag() {
        let rejected: RunConfig = toml::from_str("[grid]\nstep_count = 2\n").unwrap();
        assert!(rejected.validate().is_err());
        let allowed: RunConfig =
            toml::from_str("[grid]\nstep_count = 2\nallow_short_horizon = true\n").unwrap();
        allowed.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let result: Result<RunConfig, _> = toml::from_str("[ev]\nnot_a_key = 1\n");
        assert!(result.is_err());
    }

    #[test]
    fn penalty_mode_maps_to_discharge_term() {
        let mut config = RunConfig::default();
        config.penalty.mode = "none".into();
        assert!(matches!(
            config.discharge_term(),
            DischargeTerm::SellRevenue
        ));
        config.penalty.mode = "sell".into();
        assert!(matches!(
            config.discharge_term(),
            DischargeTerm::SellPenalty
        ));
        config.penalty.mode = "unit".into();
        assert!(matches!(
            config.discharge_term(),
            DischargeTerm::UnitPenalty { .. }
        ));
    }
}

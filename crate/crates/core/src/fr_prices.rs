//! Frequency-response price series.
//!
//! The future scenario prices Dynamic Containment hour by hour from system
//! conditions: net demand fixes the synchronous inertia on the system
//! (floored by the RoCoF limit), the frequency-nadir condition gives the
//! primary-response volume that keeps load shedding away, and the DC price
//! is the value of the primary response one extra MW of DC displaces. The
//! current scenario uses a flat price; non-FR scenarios price availability
//! at zero.

use crate::types::{PriceSeries, ScenarioKind, Violation};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

/// National system parameters for the future-price model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Nominal grid frequency (Hz).
    pub f0_hz: f64,
    /// Largest credible loss of infeed (MW).
    pub p_infeed_mw: f64,
    /// Admissible rate of change of frequency (Hz/s).
    pub rocof_limit_hz_per_s: f64,
    /// Largest admissible frequency deviation before load shedding (Hz).
    pub delta_f_max_hz: f64,
    /// Procured Dynamic Containment volume (MW).
    pub dc_volume_mw: f64,
    /// Primary frequency response availability price (£/MW/h).
    pub pfr_price_gbp_per_mw_h: f64,
    /// Nuclear capacity assumed online first (MW).
    pub nuclear_capacity_mw: f64,
    /// Inertia constant applied to nuclear and CCGT capacity (s).
    pub inertia_constant_s: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            f0_hz: 50.0,
            p_infeed_mw: 1800.0,
            rocof_limit_hz_per_s: 1.0,
            delta_f_max_hz: 0.8,
            dc_volume_mw: 1000.0,
            pfr_price_gbp_per_mw_h: 10.0,
            nuclear_capacity_mw: 5000.0,
            inertia_constant_s: 5.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut positive = |field: &str, value: f64| {
            if !(value > 0.0 && value.is_finite()) {
                v.push(Violation {
                    field: field.into(),
                    message: format!("must be strictly positive, got {value}"),
                });
            }
        };
        positive("f0_hz", self.f0_hz);
        positive("p_infeed_mw", self.p_infeed_mw);
        positive("rocof_limit_hz_per_s", self.rocof_limit_hz_per_s);
        positive("delta_f_max_hz", self.delta_f_max_hz);
        positive("dc_volume_mw", self.dc_volume_mw);
        positive("pfr_price_gbp_per_mw_h", self.pfr_price_gbp_per_mw_h);
        positive("nuclear_capacity_mw", self.nuclear_capacity_mw);
        positive("inertia_constant_s", self.inertia_constant_s);
        if self.delta_f_max_hz >= self.f0_hz {
            v.push(Violation {
                field: "delta_f_max_hz".into(),
                message: "must be below the nominal frequency".into(),
            });
        }
        v
    }
}

/// One hour of demand and renewable output (MW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileHour {
    pub hour: usize,
    pub demand_mw: f64,
    pub wind_mw: f64,
    pub solar_mw: f64,
}

/// Derived system state for one hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemHour {
    pub demand_mw: f64,
    pub wind_mw: f64,
    pub solar_mw: f64,
    pub net_demand_mw: f64,
    pub inertia_mva_s: f64,
    pub pfr_required_mw: f64,
    pub dc_price_gbp_per_mw_h: f64,
}

#[derive(Debug, Error)]
pub enum PriceError {
    #[error("invalid system parameters: {0:?}")]
    InvalidParams(Vec<Violation>),
    #[error("inertia {h} MVA·s too low for DC volume {dc} MW")]
    InertiaTooLow { h: f64, dc: f64 },
    #[error("profile must have {expected} rows, got {got}")]
    ProfileLength { expected: usize, got: usize },
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Minimum admissible system inertia given the RoCoF limit.
pub fn inertia_floor(p: &SystemParams) -> f64 {
    p.p_infeed_mw * p.f0_hz / (2.0 * p.rocof_limit_hz_per_s)
}

/// System inertia for one hour: net demand covered by nuclear then CCGTs,
/// both at the configured inertia constant, floored by the RoCoF limit.
/// Solar and wind contribute no inertia.
pub fn system_inertia(demand_mw: f64, wind_mw: f64, solar_mw: f64, p: &SystemParams) -> f64 {
    let net = (demand_mw - wind_mw - solar_mw).max(0.0);
    let nuclear_online = net.min(p.nuclear_capacity_mw);
    let ccgt_online = net - nuclear_online;
    let h = p.inertia_constant_s * (nuclear_online + ccgt_online);
    h.max(inertia_floor(p))
}

/// Primary frequency response needed to keep the post-contingency nadir
/// above the load-shedding threshold, given inertia `h` and `dc` MW of
/// Dynamic Containment (delivered within 1 s; PFR within 10 s).
pub fn required_pfr(h: f64, dc_mw: f64, p: &SystemParams) -> Result<f64, PriceError> {
    if dc_mw >= p.p_infeed_mw {
        return Ok(0.0);
    }
    let four_df = 4.0 * p.delta_f_max_hz;
    let denom = h / p.f0_hz - dc_mw / four_df;
    if denom <= 0.0 {
        return Err(PriceError::InertiaTooLow { h, dc: dc_mw });
    }
    let residual = p.p_infeed_mw - dc_mw;
    Ok(10.0 * (residual * residual / four_df) / denom)
}

/// Availability price for one MW of DC: the PFR volume it displaces at the
/// margin (1 MW finite difference), valued at the PFR price. Floored at 0.
pub fn dc_price(h: f64, p: &SystemParams) -> Result<f64, PriceError> {
    let eps = 1.0;
    let with_less_dc = required_pfr(h, p.dc_volume_mw - eps, p)?;
    let at_volume = required_pfr(h, p.dc_volume_mw, p)?;
    Ok((p.pfr_price_gbp_per_mw_h * (with_less_dc - at_volume) / eps).max(0.0))
}

/// Run the hourly pipeline over a demand/RES profile.
pub fn system_hours(
    profile: &[ProfileHour],
    p: &SystemParams,
) -> Result<Vec<SystemHour>, PriceError> {
    let issues = p.validate();
    if !issues.is_empty() {
        return Err(PriceError::InvalidParams(issues));
    }
    profile
        .iter()
        .map(|hour| {
            let net = (hour.demand_mw - hour.wind_mw - hour.solar_mw).max(0.0);
            let h = system_inertia(hour.demand_mw, hour.wind_mw, hour.solar_mw, p);
            let pfr = required_pfr(h, p.dc_volume_mw, p)?;
            let price = dc_price(h, p)?;
            Ok(SystemHour {
                demand_mw: hour.demand_mw,
                wind_mw: hour.wind_mw,
                solar_mw: hour.solar_mw,
                net_demand_mw: net,
                inertia_mva_s: h,
                pfr_required_mw: pfr,
                dc_price_gbp_per_mw_h: price,
            })
        })
        .collect()
}

/// Assemble the per-step price series for a scenario.
///
/// Future-FR prices come from the hourly pipeline (converted £/MW/h to
/// £/kW/h); current-FR uses the flat `constant_dc_price_gbp_per_mw_h`;
/// dumb/smart price availability at zero. Sell prices are forced to zero.
pub fn build_price_series(
    profile: &[ProfileHour],
    p: &SystemParams,
    scenario: ScenarioKind,
    constant_dc_price_gbp_per_mw_h: f64,
    energy_prices: &[(f64, f64)],
) -> Result<PriceSeries, PriceError> {
    let steps = energy_prices.len();
    let fr = match scenario {
        ScenarioKind::FutureFr => {
            if profile.len() != steps {
                return Err(PriceError::ProfileLength {
                    expected: steps,
                    got: profile.len(),
                });
            }
            system_hours(profile, p)?
                .iter()
                .map(|h| h.dc_price_gbp_per_mw_h / 1000.0)
                .collect()
        }
        ScenarioKind::CurrentFr => vec![constant_dc_price_gbp_per_mw_h / 1000.0; steps],
        ScenarioKind::DumbCharging | ScenarioKind::SmartCharging => vec![0.0; steps],
    };
    Ok(PriceSeries {
        buy: energy_prices.iter().map(|&(b, _)| b).collect(),
        sell: vec![0.0; steps],
        fr,
    })
}

/// Season selector for the built-in demo profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Season {
    Summer,
    Winter,
}

impl std::str::FromStr for Season {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "summer" => Ok(Season::Summer),
            "winter" => Ok(Season::Winter),
            other => Err(format!(
                "unknown season '{other}' (expected summer or winter)"
            )),
        }
    }
}

/// Built-in 24-hour demand/RES profile with daily and seasonal shape,
/// demand between roughly 20 and 60 GW. Synthetic and illustrative; CSV
/// ingestion is the primary path. `extreme` pushes renewable output up to
/// produce low-inertia hours.
pub fn synthetic_profile(
    season: Season,
    extreme: bool,
    start_hour_of_day: u32,
) -> Vec<ProfileHour> {
    use std::f64::consts::PI;
    let (base, amp) = match season {
        Season::Summer => (30_000.0, 8_000.0),
        Season::Winter => (42_000.0, 12_000.0),
    };
    let wind_level = match (season, extreme) {
        (Season::Winter, false) => 18_000.0,
        (Season::Winter, true) => 32_000.0,
        (Season::Summer, false) => 8_000.0,
        (Season::Summer, true) => 12_000.0,
    };
    let solar_peak = match (season, extreme) {
        (Season::Summer, false) => 20_000.0,
        (Season::Summer, true) => 33_000.0,
        (Season::Winter, false) => 5_000.0,
        (Season::Winter, true) => 8_000.0,
    };
    (0..24)
        .map(|step| {
            let clock = f64::from((start_hour_of_day as usize + step) as u32 % 24);
            // Demand peaks in the early evening, troughs around 4am.
            let demand = base + amp * ((clock - 10.0) * PI / 12.0).sin();
            // Wind is strongest overnight.
            let wind = wind_level * (0.75 + 0.25 * ((clock + 2.0) * PI / 12.0).cos());
            // Solar is a midday bell.
            let solar = if (6.0..=18.0).contains(&clock) {
                solar_peak * ((clock - 12.0) * PI / 12.0).cos().max(0.0)
            } else {
                0.0
            };
            ProfileHour {
                hour: step,
                demand_mw: demand,
                wind_mw: wind,
                solar_mw: solar,
            }
        })
        .collect()
}

/// Built-in hourly wholesale energy price curve (buy, sell) in £/kWh for a
/// typical day of each season, shaped with morning and evening peaks.
/// Illustrative values; CSV ingestion is the primary path. Sell prices are
/// zero throughout.
pub fn demo_energy_prices(season: Season, start_hour_of_day: u32) -> Vec<(f64, f64)> {
    let (base, swing) = match season {
        Season::Summer => (0.036, 0.014),
        Season::Winter => (0.044, 0.018),
    };
    (0..24)
        .map(|step| {
            let clock = (start_hour_of_day as usize + step) % 24;
            let peak = match clock {
                7..=9 => 0.7,
                17..=20 => 1.0,
                0..=5 => -1.0,
                _ => 0.0,
            };
            (base + swing * peak, 0.0)
        })
        .collect()
}

/// Read a system profile CSV: `hour,demand_mw,wind_mw,solar_mw`.
pub fn read_profile_csv(path: &Path) -> Result<Vec<ProfileHour>, PriceError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if idx == 0 {
            expect_header(&line, "hour,demand_mw,wind_mw,solar_mw", idx)?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(&line, 4, idx)?;
        out.push(ProfileHour {
            hour: parse_field(&fields[0], idx)?,
            demand_mw: parse_field(&fields[1], idx)?,
            wind_mw: parse_field(&fields[2], idx)?,
            solar_mw: parse_field(&fields[3], idx)?,
        });
    }
    Ok(out)
}

/// Read an energy price CSV: `hour,buy_gbp_per_kwh,sell_gbp_per_kwh`.
/// Returns (buy, sell) pairs in row order.
pub fn read_energy_csv(path: &Path) -> Result<Vec<(f64, f64)>, PriceError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if idx == 0 {
            expect_header(&line, "hour,buy_gbp_per_kwh,sell_gbp_per_kwh", idx)?;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(&line, 3, idx)?;
        out.push((parse_field(&fields[1], idx)?, parse_field(&fields[2], idx)?));
    }
    Ok(out)
}

/// Write the emitted price series CSV: `hour,buy,sell,fr_gbp_per_kw`.
pub fn write_price_series_csv(mut w: impl Write, prices: &PriceSeries) -> std::io::Result<()> {
    writeln!(w, "hour,buy,sell,fr_gbp_per_kw")?;
    for t in 0..prices.buy.len() {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6}",
            t, prices.buy[t], prices.sell[t], prices.fr[t]
        )?;
    }
    Ok(())
}

fn expect_header(line: &str, expected: &str, idx: usize) -> Result<(), PriceError> {
    if line.trim() != expected {
        return Err(PriceError::Csv {
            line: idx + 1,
            message: format!("expected header '{expected}', got '{line}'"),
        });
    }
    Ok(())
}

fn split_fields(line: &str, expected: usize, idx: usize) -> Result<Vec<String>, PriceError> {
    let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
    if fields.len() != expected {
        return Err(PriceError::Csv {
            line: idx + 1,
            message: format!("expected {expected} fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_field<T: std::str::FromStr>(s: &str, idx: usize) -> Result<T, PriceError> {
    s.parse().map_err(|_| PriceError::Csv {
        line: idx + 1,
        message: format!("cannot parse '{s}'"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inertia_floor_matches_system_constants() {
        let p = SystemParams::default();
        assert!((inertia_floor(&p) - 45_000.0).abs() < 1e-9);
        let doubled = SystemParams {
            rocof_limit_hz_per_s: 2.0,
            ..p
        };
        assert!((inertia_floor(&doubled) - 22_500.0).abs() < 1e-9);
        let no_infeed = SystemParams {
            p_infeed_mw: f64::MIN_POSITIVE,
            ..p
        };
        assert!(inertia_floor(&no_infeed) < 1e-300);
    }

    #[test]
    fn system_inertia_cases() {
        let p = SystemParams::default();
        // Zero net demand: floor binds.
        assert!((system_inertia(10_000.0, 8_000.0, 2_000.0, &p) - 45_000.0).abs() < 1e-9);
        // 30 GW net: 5 s on the full volume.
        assert!((system_inertia(30_000.0, 0.0, 0.0, &p) - 150_000.0).abs() < 1e-9);
        // 5 GW net: 25,000 below the floor.
        assert!((system_inertia(5_000.0, 0.0, 0.0, &p) - 45_000.0).abs() < 1e-9);
    }

    #[test]
    fn required_pfr_spot_values() {
        let p = SystemParams::default();
        let at_floor = required_pfr(45_000.0, 1_000.0, &p).unwrap();
        assert!(
            (at_floor - 3_404.3).abs() < 0.1,
            "PFR at the floor was {at_floor}"
        );
        let no_dc = required_pfr(45_000.0, 0.0, &p).unwrap();
        assert!((no_dc - 11_250.0).abs() < 1e-6);
        assert_eq!(required_pfr(45_000.0, 1_800.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn required_pfr_rejects_low_inertia() {
        let p = SystemParams::default();
        // H/f0 must exceed dc/(4*delta_f): 1000/3.2 = 312.5, so H < 15,625.
        let err = required_pfr(15_000.0, 1_000.0, &p).unwrap_err();
        assert!(matches!(err, PriceError::InertiaTooLow { .. }));
    }

    #[test]
    fn dc_price_at_floor_near_67() {
        let p = SystemParams::default();
        let price = dc_price(45_000.0, &p).unwrap();
        assert!((price - 67.0).abs() < 1.0, "price {price}");
    }

    #[test]
    fn dc_price_matches_analytic_derivative() {
        let p = SystemParams::default();
        for h in [45_000.0, 60_000.0, 90_000.0, 200_000.0] {
            let fd = dc_price(h, &p).unwrap();
            // d(PFR)/d(DC) evaluated at the midpoint of the backward step.
            let dc = p.dc_volume_mw - 0.5;
            let four_df = 4.0 * p.delta_f_max_hz;
            let n = (p.p_infeed_mw - dc).powi(2) / four_df;
            let n_prime = -2.0 * (p.p_infeed_mw - dc) / four_df;
            let d = h / p.f0_hz - dc / four_df;
            let d_prime = -1.0 / four_df;
            let derivative = 10.0 * (n_prime * d - n * d_prime) / (d * d);
            let analytic = -p.pfr_price_gbp_per_mw_h * derivative;
            assert!(
                (fd - analytic).abs() < 0.05 * analytic.abs().max(1e-9),
                "H={h}: finite difference {fd} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn dc_price_non_increasing_in_inertia() {
        let p = SystemParams::default();
        let floor = inertia_floor(&p);
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let h = floor * (1.0 + 9.0 * i as f64 / 999.0);
            let price = dc_price(h, &p).unwrap();
            assert!(
                price <= prev + 1e-9,
                "price increased at H={h}: {price} > {prev}"
            );
            assert!(price >= 0.0);
            prev = price;
        }
        assert!(prev > 0.0, "price should approach a small positive limit");
    }

    #[test]
    fn required_pfr_non_increasing_in_dc() {
        let p = SystemParams::default();
        let h = 45_000.0;
        let mut prev = f64::INFINITY;
        for i in 0..=180 {
            let dc = 10.0 * i as f64;
            let pfr = required_pfr(h, dc, &p).unwrap();
            assert!(pfr <= prev + 1e-9, "PFR increased at dc={dc}");
            prev = pfr;
        }
    }

    #[test]
    fn nadir_identity_holds_after_solving() {
        // Substituting the solved PFR back into the nadir condition gives
        // equality to within 1e-6 relative.
        let p = SystemParams::default();
        for h in [45_000.0, 80_000.0, 150_000.0, 300_000.0] {
            for dc in [0.0, 250.0, 1_000.0, 1_500.0] {
                let pfr = required_pfr(h, dc, &p).unwrap();
                let four_df = 4.0 * p.delta_f_max_hz;
                let lhs = (h / p.f0_hz - dc / four_df) * pfr / 10.0;
                let rhs = (p.p_infeed_mw - dc).powi(2) / four_df;
                assert!(
                    (lhs - rhs).abs() <= 1e-6 * rhs.abs().max(1.0),
                    "H={h} DC={dc}: lhs {lhs} rhs {rhs}"
                );
            }
        }
    }

    #[test]
    fn constant_inputs_give_constant_series() {
        let p = SystemParams::default();
        // Wind at full 45 GW output against 20 GW demand: zero net demand
        // every hour, so the floor binds and the price is flat.
        let profile: Vec<ProfileHour> = (0..24)
            .map(|hour| ProfileHour {
                hour,
                demand_mw: 20_000.0,
                wind_mw: 45_000.0,
                solar_mw: 0.0,
            })
            .collect();
        let energy = vec![(0.04, 0.0); 24];
        let series =
            build_price_series(&profile, &p, ScenarioKind::FutureFr, 17.0, &energy).unwrap();
        let first = series.fr[0];
        assert!(series.fr.iter().all(|f| (f - first).abs() < 1e-12));
        let floor_price = dc_price(inertia_floor(&p), &p).unwrap() / 1000.0;
        assert!((first - floor_price).abs() < 1e-12);
        assert!(series.sell.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn midday_solar_peak_raises_midday_price() {
        let p = SystemParams::default();
        let profile = synthetic_profile(Season::Summer, true, 0);
        let series = build_price_series(
            &profile,
            &p,
            ScenarioKind::FutureFr,
            17.0,
            &vec![(0.04, 0.0); 24],
        )
        .unwrap();
        let midday = series.fr[12];
        let night = series.fr[2];
        assert!(
            midday > night,
            "midday price {midday} should exceed night {night}"
        );
    }

    #[test]
    fn current_fr_is_flat_scaled_constant() {
        let p = SystemParams::default();
        let series = build_price_series(
            &[],
            &p,
            ScenarioKind::CurrentFr,
            17.0,
            &vec![(0.05, 0.0); 24],
        )
        .unwrap();
        assert!(series.fr.iter().all(|&f| (f - 0.017).abs() < 1e-12));
        let dumb = build_price_series(
            &[],
            &p,
            ScenarioKind::DumbCharging,
            17.0,
            &vec![(0.05, 0.0); 24],
        )
        .unwrap();
        assert!(dumb.fr.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn profile_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profile.csv");
        let mut text = String::from("hour,demand_mw,wind_mw,solar_mw\n");
        for h in 0..24 {
            text.push_str(&format!("{h},30000,10000,{}\n", h * 100));
        }
        std::fs::write(&path, text).unwrap();
        let profile = read_profile_csv(&path).unwrap();
        assert_eq!(profile.len(), 24);
        assert_eq!(profile[3].solar_mw, 300.0);

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "wrong,header\n").unwrap();
        assert!(matches!(
            read_profile_csv(&bad),
            Err(PriceError::Csv { .. })
        ));
    }

    #[test]
    fn synthetic_profile_stays_in_stated_range() {
        for season in [Season::Summer, Season::Winter] {
            for extreme in [false, true] {
                for hour in synthetic_profile(season, extreme, 7) {
                    assert!(hour.demand_mw >= 18_000.0 && hour.demand_mw <= 60_000.0);
                    assert!(hour.wind_mw >= 0.0 && hour.solar_mw >= 0.0);
                }
            }
        }
    }
}

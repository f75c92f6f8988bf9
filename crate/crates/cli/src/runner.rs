//! End-to-end scenario runner: resolve config into concrete inputs, fan the
//! per-EV solves out over a worker pool, aggregate fleet totals, and write
//! the report files.
//!
//! All fan-out results are collected in canonical (scenario, EV, mode)
//! order before any aggregation, so reports are byte-identical for a fixed
//! config and seed regardless of the worker count.

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use v2g_core::charging::{solve_day, DaySolution, PlannedTrip, SolveOptions};
use v2g_core::config::RunConfig;
use v2g_core::emissions::{ccgts_avoided, co2_avoided_kg, BaselineHour, EmissionsHour};
use v2g_core::fleet_synth::{read_fleet_csv, synth_fleet, FleetEv};
use v2g_core::fr_prices::{
    build_price_series, demo_energy_prices, read_energy_csv, read_profile_csv, required_pfr,
    synthetic_profile, system_hours, ProfileHour, SystemHour,
};
use v2g_core::trips::{departure_ready_ev, optimize_trip, CandidateOutcome, TripError};
use v2g_core::types::{EvParams, PriceSeries, ScenarioKind, Schedule, TimeGrid, TripSpec};

/// Everything a run needs, resolved from a [`RunConfig`].
pub struct RunInputs {
    pub grid: TimeGrid,
    pub ev: EvParams,
    pub opts: SolveOptions,
    pub scenarios: Vec<ScenarioKind>,
    pub fleet: Vec<FleetEv>,
    pub fleet_source: String,
    pub prices: BTreeMap<ScenarioKind, PriceSeries>,
    pub profile: Vec<ProfileHour>,
    pub config: RunConfig,
}

fn resolve_path(base: Option<&Path>, value: &str) -> PathBuf {
    let path = Path::new(value);
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

/// Materialise fleet, profile and per-scenario price series. Relative paths
/// in the config resolve against `config_dir`.
pub fn resolve_inputs(config: &RunConfig, config_dir: Option<&Path>) -> Result<RunInputs> {
    let grid = config.grid();
    let ev = config.ev_params();
    let opts = config.solve_options();

    let (fleet, fleet_source) = if config.fleet.csv.is_empty() {
        (
            synth_fleet(
                config.fleet.kind,
                config.fleet.season,
                config.fleet.n,
                config.run.seed,
                &grid,
            ),
            format!(
                "synthetic {} {:?} n={} seed={}",
                config.fleet.kind.as_str(),
                config.fleet.season,
                config.fleet.n,
                config.run.seed
            ),
        )
    } else {
        let path = resolve_path(config_dir, &config.fleet.csv);
        let fleet = read_fleet_csv(&path)
            .with_context(|| format!("reading fleet csv {}", path.display()))?;
        (fleet, config.fleet.csv.clone())
    };
    if fleet.is_empty() {
        bail!("fleet is empty");
    }

    let energy = if config.prices.energy_csv.is_empty() {
        demo_energy_prices(config.fleet.season, grid.start_hour_of_day)
    } else {
        let path = resolve_path(config_dir, &config.prices.energy_csv);
        read_energy_csv(&path)
            .with_context(|| format!("reading energy prices {}", path.display()))?
    };
    if energy.len() != grid.step_count {
        bail!(
            "energy price series has {} rows, expected {}",
            energy.len(),
            grid.step_count
        );
    }

    let profile = if config.prices.profile_csv.is_empty() {
        synthetic_profile(
            config.fleet.season,
            config.prices.extreme_day,
            grid.start_hour_of_day,
        )
    } else {
        let path = resolve_path(config_dir, &config.prices.profile_csv);
        read_profile_csv(&path)
            .with_context(|| format!("reading system profile {}", path.display()))?
    };

    let mut prices = BTreeMap::new();
    for &scenario in &config.scenarios.kinds {
        let series = build_price_series(
            &profile,
            &config.system,
            scenario,
            config.scenarios.current_dc_price_gbp_per_mw_h,
            &energy,
        )?;
        prices.insert(scenario, series);
    }

    Ok(RunInputs {
        grid,
        ev,
        opts,
        scenarios: config.scenarios.kinds.clone(),
        fleet,
        fleet_source,
        prices,
        profile,
        config: config.clone(),
    })
}

/// Revenue summary for one solved EV-day.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub start_step: usize,
    pub revenue_fr_gbp: f64,
    pub cost_energy_gbp: f64,
    pub penalty_gbp: f64,
    pub revenue_net_gbp: f64,
}

impl SolveSummary {
    fn from_day(start_step: usize, day: &DaySolution) -> Self {
        SolveSummary {
            start_step,
            revenue_fr_gbp: day.schedule.revenue_fr_gbp,
            cost_energy_gbp: day.schedule.cost_energy_gbp,
            penalty_gbp: day.schedule.penalty_gbp,
            revenue_net_gbp: day.schedule.revenue_net_gbp,
        }
    }
}

/// One EV under one scenario: the original-start solve and the optimal-trip
/// solve, either of which may fail with a diagnostic.
pub struct EvScenarioResult {
    pub ev_id: String,
    pub original: Result<(SolveSummary, Schedule), String>,
    pub optimal: Result<(SolveSummary, Schedule, Vec<CandidateOutcome>), String>,
    pub warnings: Vec<String>,
}

/// Fleet totals for one mode.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Totals {
    pub revenue_fr_gbp: f64,
    pub cost_energy_gbp: f64,
    pub penalty_gbp: f64,
    pub revenue_net_gbp: f64,
}

impl Totals {
    fn add(&mut self, s: &SolveSummary) {
        self.revenue_fr_gbp += s.revenue_fr_gbp;
        self.cost_energy_gbp += s.cost_energy_gbp;
        self.penalty_gbp += s.penalty_gbp;
        self.revenue_net_gbp += s.revenue_net_gbp;
    }

    fn rounded(self) -> Totals {
        Totals {
            revenue_fr_gbp: round4(self.revenue_fr_gbp),
            cost_energy_gbp: round4(self.cost_energy_gbp),
            penalty_gbp: round4(self.penalty_gbp),
            revenue_net_gbp: round4(self.revenue_net_gbp),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfeasibleEv {
    pub ev_id: String,
    pub mode: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub ev_count: usize,
    /// EVs with both the original and the optimal solve feasible; fleet
    /// totals cover exactly these.
    pub compared_count: usize,
    pub original: Totals,
    pub optimal: Totals,
    /// Net-revenue uplift of optimal over original trips, percent. Absent
    /// when the original total is too close to zero.
    pub uplift_pct: Option<f64>,
    pub infeasible: Vec<InfeasibleEv>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmissionsReport {
    pub scenario: String,
    pub fleet_scale: usize,
    pub mean_dc_ev_mw: f64,
    pub mean_ccgts_avoided: f64,
    pub co2_avoided_kg_per_month: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FleetMeta {
    pub kind: String,
    pub season: String,
    pub n: usize,
    pub source: String,
}

/// The `summary.json` payload. Field order is fixed; all maps are ordered;
/// no wall-clock or thread-count data, so identical configs and seeds
/// produce identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub fleet: FleetMeta,
    pub scenarios: Vec<ScenarioReport>,
    pub emissions: Option<EmissionsReport>,
}

/// Full in-memory result of a run, before any files are written.
pub struct RunOutcome {
    pub report: RunReport,
    pub per_ev_csv: String,
    /// (scenario, ev_id) -> candidate table CSV.
    pub candidate_csvs: Vec<(String, String, String)>,
    pub emissions_rows: Vec<EmissionsHour>,
    pub warnings: Vec<String>,
    /// Unrounded (scenario, original, optimal) fleet totals; the report
    /// carries the 4-decimal versions.
    pub unrounded_totals: Vec<(String, Totals, Totals)>,
}

pub fn round4(x: f64) -> f64 {
    let r = (x * 1e4).round() / 1e4;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn round3(x: f64) -> f64 {
    let r = (x * 1e3).round() / 1e3;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Solve one EV under one scenario: original start plus optimal trip.
fn solve_ev_scenario(
    ev: &EvParams,
    fleet_ev: &FleetEv,
    prices: &PriceSeries,
    scenario: ScenarioKind,
    grid: &TimeGrid,
    opts: &SolveOptions,
) -> EvScenarioResult {
    let trip = &fleet_ev.trip;
    let mut warnings = Vec::new();

    // The original-start solve uses exactly the same start-energy anchoring
    // as the candidates inside optimize_trip, so the original start's
    // revenue is identical in both paths.
    let ev_eff = departure_ready_ev(ev, trip, grid, opts.raise_start_soc);
    let solo_opts = SolveOptions {
        raise_start_soc: false,
        ..*opts
    };
    let planned = PlannedTrip::at_original_start(trip);
    let original = match solve_day(&ev_eff, Some(&planned), prices, scenario, grid, &solo_opts) {
        Ok(day) => {
            warnings.extend(day.warnings.iter().cloned());
            Ok((
                SolveSummary::from_day(planned.start_step, &day),
                day.schedule,
            ))
        }
        Err(e) => Err(e.to_string()),
    };

    let optimal = match optimize_trip(ev, trip, prices, scenario, grid, opts) {
        Ok(choice) => {
            // Per-candidate diagnostics stay in the candidate table; the log
            // gets one line per EV.
            if !choice.warnings.is_empty() {
                warnings.push(format!(
                    "{} infeasible candidate starts skipped",
                    choice.warnings.len()
                ));
            }
            Ok((
                SolveSummary::from_day(choice.start_step, &choice.day),
                choice.day.schedule,
                choice.per_candidate,
            ))
        }
        Err(TripError::AllInfeasible { diagnostics }) => Err(format!(
            "all candidate starts infeasible: {}",
            diagnostics.join("; ")
        )),
        Err(e) => Err(e.to_string()),
    };

    EvScenarioResult {
        ev_id: fleet_ev.id.clone(),
        original,
        optimal,
        warnings,
    }
}

/// Run every configured scenario over the fleet, with original and optimal
/// trips, and assemble the report.
pub fn run_scenarios(inputs: &RunInputs) -> Result<RunOutcome> {
    let mut scenario_reports = Vec::new();
    let mut per_ev_csv = String::from(
        "ev_id,scenario,mode,start_step,feasible,revenue_fr_gbp,cost_energy_gbp,penalty_gbp,revenue_net_gbp\n",
    );
    let mut candidate_csvs = Vec::new();
    let mut warnings = Vec::new();
    let mut unrounded_totals = Vec::new();
    let mut emissions_schedules: Option<(ScenarioKind, Vec<Schedule>)> = None;
    let emissions_scenario = [ScenarioKind::FutureFr, ScenarioKind::CurrentFr]
        .into_iter()
        .find(|s| inputs.scenarios.contains(s));

    for &scenario in &inputs.scenarios {
        let prices = &inputs.prices[&scenario];
        let results: Vec<EvScenarioResult> = inputs
            .fleet
            .par_iter()
            .map(|fleet_ev| {
                solve_ev_scenario(
                    &inputs.ev,
                    fleet_ev,
                    prices,
                    scenario,
                    &inputs.grid,
                    &inputs.opts,
                )
            })
            .collect();

        let mut original_totals = Totals::default();
        let mut optimal_totals = Totals::default();
        let mut compared = 0usize;
        let mut infeasible = Vec::new();
        let mut schedules = Vec::new();
        for r in &results {
            warnings.extend(r.warnings.iter().map(|w| format!("{}: {w}", r.ev_id)));
            if let (Ok((orig, _)), Ok((opt, schedule, _))) = (&r.original, &r.optimal) {
                original_totals.add(orig);
                optimal_totals.add(opt);
                compared += 1;
                schedules.push(schedule.clone());
            }
            if let Err(message) = &r.original {
                infeasible.push(InfeasibleEv {
                    ev_id: r.ev_id.clone(),
                    mode: "original".into(),
                    message: message.clone(),
                });
            }
            if let Err(message) = &r.optimal {
                infeasible.push(InfeasibleEv {
                    ev_id: r.ev_id.clone(),
                    mode: "optimal".into(),
                    message: message.clone(),
                });
            }

            for (mode, summary) in [
                ("original", r.original.as_ref().ok().map(|(s, _)| s)),
                ("optimal", r.optimal.as_ref().ok().map(|(s, _, _)| s)),
            ] {
                match summary {
                    Some(s) => per_ev_csv.push_str(&format!(
                        "{},{},{},{},true,{:.4},{:.4},{:.4},{:.4}\n",
                        r.ev_id,
                        scenario.as_str(),
                        mode,
                        s.start_step,
                        s.revenue_fr_gbp,
                        s.cost_energy_gbp,
                        s.penalty_gbp,
                        s.revenue_net_gbp
                    )),
                    None => per_ev_csv.push_str(&format!(
                        "{},{},{},,false,,,,\n",
                        r.ev_id,
                        scenario.as_str(),
                        mode
                    )),
                }
            }
            if let Ok((_, _, candidates)) = &r.optimal {
                candidate_csvs.push((
                    scenario.as_str().to_string(),
                    r.ev_id.clone(),
                    v2g_core::trips::candidates_csv(candidates),
                ));
            }
        }

        if emissions_scenario == Some(scenario) {
            emissions_schedules = Some((scenario, schedules));
        }

        let uplift = if original_totals.revenue_net_gbp.abs() > 1e-9 {
            Some(round4(
                100.0 * (optimal_totals.revenue_net_gbp - original_totals.revenue_net_gbp)
                    / original_totals.revenue_net_gbp.abs(),
            ))
        } else {
            None
        };
        scenario_reports.push(ScenarioReport {
            scenario: scenario.as_str().to_string(),
            ev_count: inputs.fleet.len(),
            compared_count: compared,
            original: original_totals.rounded(),
            optimal: optimal_totals.rounded(),
            uplift_pct: uplift,
            infeasible,
        });
        unrounded_totals.push((
            scenario.as_str().to_string(),
            original_totals,
            optimal_totals,
        ));
    }

    let (emissions, emissions_rows) = match emissions_schedules {
        Some((scenario, schedules)) if !schedules.is_empty() => {
            let (report, rows) = fleet_emissions(inputs, scenario, &schedules)?;
            (Some(report), rows)
        }
        _ => (None, Vec::new()),
    };

    let report = RunReport {
        schema_version: 1,
        seed: inputs.config.run.seed,
        fleet: FleetMeta {
            kind: inputs.config.fleet.kind.as_str().to_string(),
            season: format!("{:?}", inputs.config.fleet.season).to_lowercase(),
            n: inputs.fleet.len(),
            source: inputs.fleet_source.clone(),
        },
        scenarios: scenario_reports,
        emissions,
    };

    Ok(RunOutcome {
        report,
        per_ev_csv,
        candidate_csvs,
        emissions_rows,
        warnings,
        unrounded_totals,
    })
}

/// Hourly CCGTs released by the fleet's availability, scaled to the
/// configured fleet size, plus the monthly CO₂ figure.
fn fleet_emissions(
    inputs: &RunInputs,
    scenario: ScenarioKind,
    schedules: &[Schedule],
) -> Result<(EmissionsReport, Vec<EmissionsHour>)> {
    let cfg = &inputs.config.emissions;
    let hours: Vec<SystemHour> = system_hours(&inputs.profile, &inputs.config.system)?;
    let scale = cfg.fleet_scale as f64 / schedules.len() as f64;

    let mut rows = Vec::with_capacity(inputs.grid.step_count);
    let mut x_sum = 0.0;
    let mut dc_sum = 0.0;
    for (t, hour) in hours.iter().enumerate().take(inputs.grid.step_count) {
        let dc_kw: f64 = schedules
            .iter()
            .map(|s| s.bsup_c_kw[t] + s.bsup_d_kw[t])
            .sum();
        let dc_ev_mw = (dc_kw / 1000.0 * scale).min(inputs.config.system.dc_volume_mw);
        let baseline = BaselineHour {
            inertia_mva_s: hour.inertia_mva_s,
            pfr_mw: required_pfr(
                hour.inertia_mva_s,
                inputs.config.system.dc_volume_mw,
                &inputs.config.system,
            )?,
            dc_mw: inputs.config.system.dc_volume_mw,
        };
        let x = ccgts_avoided(&baseline, dc_ev_mw, &inputs.config.system, &cfg.ccgt)
            .map_err(|e| anyhow!("hour {t}: {e}"))?;
        x_sum += x;
        dc_sum += dc_ev_mw;
        rows.push(EmissionsHour {
            hour: t,
            dc_ev_mw,
            x_avoided: x,
        });
    }
    let mean_x = x_sum / rows.len() as f64;
    let mean_dc = dc_sum / rows.len() as f64;
    let co2 = co2_avoided_kg(mean_x, cfg.hours_per_month, &cfg.ccgt, cfg.energy_basis_mw);
    Ok((
        EmissionsReport {
            scenario: scenario.as_str().to_string(),
            fleet_scale: cfg.fleet_scale,
            mean_dc_ev_mw: round3(mean_dc),
            mean_ccgts_avoided: round4(mean_x),
            co2_avoided_kg_per_month: round3(co2),
        },
        rows,
    ))
}

/// Write a file atomically (write to `<name>.tmp`, then rename), creating
/// parent directories as needed.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f =
            std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Serialise the report exactly as `summary.json` stores it.
pub fn summary_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

/// Write `summary.json`, `per_ev.csv`, per-scenario candidate tables and
/// `emissions.csv` under `out_dir`.
pub fn write_outputs(outcome: &RunOutcome, out_dir: &Path) -> Result<()> {
    write_atomic(
        &out_dir.join("summary.json"),
        summary_json(&outcome.report).as_bytes(),
    )?;
    write_atomic(&out_dir.join("per_ev.csv"), outcome.per_ev_csv.as_bytes())?;
    for (scenario, ev_id, csv) in &outcome.candidate_csvs {
        write_atomic(
            &out_dir
                .join(scenario)
                .join(format!("candidates_{ev_id}.csv")),
            csv.as_bytes(),
        )?;
    }
    if !outcome.emissions_rows.is_empty() {
        let mut buf = Vec::new();
        v2g_core::emissions::write_emissions_csv(&mut buf, &outcome.emissions_rows)?;
        write_atomic(&out_dir.join("emissions.csv"), &buf)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sensitivity studies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceScalePoint {
    pub scale: f64,
    pub original: Totals,
    pub optimal: Totals,
    pub uplift_pct: Option<f64>,
    /// Availability revenue of the scale-1.0 optimal schedules re-valued at
    /// this scale without re-optimizing (linearity reference).
    pub fr_revenue_fixed_schedules_gbp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceSensitivityReport {
    pub scenario: String,
    pub scales: Vec<PriceScalePoint>,
}

/// Re-run the configured FR scenario with the availability price series
/// multiplied by each scale.
pub fn price_sensitivity(inputs: &RunInputs, scales: &[f64]) -> Result<PriceSensitivityReport> {
    let scenario = *inputs
        .scenarios
        .iter()
        .find(|s| s.fr_enabled())
        .ok_or_else(|| anyhow!("price sensitivity needs an FR scenario configured"))?;
    let base_prices = &inputs.prices[&scenario];

    let mut base_schedules: Option<Vec<Schedule>> = None;
    let mut points = Vec::new();
    for &scale in scales {
        let prices = PriceSeries {
            buy: base_prices.buy.clone(),
            sell: base_prices.sell.clone(),
            fr: base_prices.fr.iter().map(|f| f * scale).collect(),
        };
        let results: Vec<EvScenarioResult> = inputs
            .fleet
            .par_iter()
            .map(|fleet_ev| {
                solve_ev_scenario(
                    &inputs.ev,
                    fleet_ev,
                    &prices,
                    scenario,
                    &inputs.grid,
                    &inputs.opts,
                )
            })
            .collect();
        let mut original = Totals::default();
        let mut optimal = Totals::default();
        let mut schedules = Vec::new();
        for r in &results {
            if let (Ok((orig, _)), Ok((opt, schedule, _))) = (&r.original, &r.optimal) {
                original.add(orig);
                optimal.add(opt);
                schedules.push(schedule.clone());
            }
        }
        if scale == 1.0 && base_schedules.is_none() {
            base_schedules = Some(schedules);
        }
        let fixed = base_schedules
            .as_ref()
            .map(|scheds| {
                scheds
                    .iter()
                    .map(|s| {
                        s.bsup_c_kw
                            .iter()
                            .zip(&s.bsup_d_kw)
                            .zip(&prices.fr)
                            .map(|((bc, bd), f)| (bc + bd) * f * inputs.grid.step_hours)
                            .sum::<f64>()
                    })
                    .sum()
            })
            .unwrap_or(0.0);
        let uplift = if original.revenue_net_gbp.abs() > 1e-9 {
            Some(round4(
                100.0 * (optimal.revenue_net_gbp - original.revenue_net_gbp)
                    / original.revenue_net_gbp.abs(),
            ))
        } else {
            None
        };
        points.push(PriceScalePoint {
            scale,
            original: original.rounded(),
            optimal: optimal.rounded(),
            uplift_pct: uplift,
            fr_revenue_fixed_schedules_gbp: round4(fixed),
        });
    }
    Ok(PriceSensitivityReport {
        scenario: scenario.as_str().to_string(),
        scales: points,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayPoint {
    pub delay_steps: usize,
    pub optimal: Totals,
    /// Net-revenue reduction vs the zero-delay optimum, percent.
    pub reduction_pct: f64,
    pub clamped_trips: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelaySensitivityReport {
    pub scenario: String,
    pub baseline_optimal: Totals,
    pub delays: Vec<DelayPoint>,
}

fn extend_trip(trip: &TripSpec, delay: usize) -> (TripSpec, bool) {
    let window_span = trip.window_end_step - trip.window_start_step;
    let wanted = trip.duration_steps + delay;
    let duration = wanted.min(window_span);
    let clamped = duration < wanted;
    let latest_start = trip.window_end_step - duration;
    (
        TripSpec {
            duration_steps: duration,
            original_start_step: trip.original_start_step.min(latest_start),
            ..*trip
        },
        clamped,
    )
}

/// Re-run optimal trips with every trip extended by each delay.
pub fn delay_sensitivity(inputs: &RunInputs, delays: &[usize]) -> Result<DelaySensitivityReport> {
    let scenario = *inputs
        .scenarios
        .iter()
        .find(|s| s.fr_enabled())
        .ok_or_else(|| anyhow!("delay sensitivity needs an FR scenario configured"))?;
    let prices = &inputs.prices[&scenario];

    let optimal_totals = |delay: usize| -> Result<(Totals, usize)> {
        let results: Vec<(Option<SolveSummary>, bool)> = inputs
            .fleet
            .par_iter()
            .map(|fleet_ev| {
                let (trip, clamped) = extend_trip(&fleet_ev.trip, delay);
                let summary = optimize_trip(
                    &inputs.ev,
                    &trip,
                    prices,
                    scenario,
                    &inputs.grid,
                    &inputs.opts,
                )
                .ok()
                .map(|choice| SolveSummary::from_day(choice.start_step, &choice.day));
                (summary, clamped)
            })
            .collect();
        let mut totals = Totals::default();
        let mut clamped_count = 0;
        for (summary, clamped) in &results {
            if let Some(s) = summary {
                totals.add(s);
            }
            if *clamped {
                clamped_count += 1;
            }
        }
        Ok((totals, clamped_count))
    };

    let (baseline, _) = optimal_totals(0)?;
    let mut points = Vec::new();
    for &delay in delays {
        let (totals, clamped) = optimal_totals(delay)?;
        let reduction = if baseline.revenue_net_gbp.abs() > 1e-9 {
            round4(
                100.0 * (baseline.revenue_net_gbp - totals.revenue_net_gbp)
                    / baseline.revenue_net_gbp.abs(),
            )
        } else {
            0.0
        };
        points.push(DelayPoint {
            delay_steps: delay,
            optimal: totals.rounded(),
            reduction_pct: reduction,
            clamped_trips: clamped,
        });
    }
    Ok(DelaySensitivityReport {
        scenario: scenario.as_str().to_string(),
        baseline_optimal: baseline.rounded(),
        delays: points,
    })
}

/// Build the rayon pool for `jobs` workers (0 = number of CPUs) and run the
/// closure inside it.
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if jobs > 0 {
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().context("building worker pool")?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use v2g_core::fleet_synth::FleetKind;
    use v2g_core::fr_prices::Season;

    fn small_config(kinds: Vec<ScenarioKind>, n: usize) -> RunConfig {
        let mut config = RunConfig::default();
        config.fleet.kind = FleetKind::Maintenance;
        config.fleet.season = Season::Summer;
        config.fleet.n = n;
        config.scenarios.kinds = kinds;
        config.run.seed = 17;
        config
    }

    #[test]
    fn fleet_totals_equal_sum_of_per_ev_solves() {
        let config = small_config(vec![ScenarioKind::FutureFr], 5);
        let inputs = resolve_inputs(&config, None).unwrap();
        let outcome = run_scenarios(&inputs).unwrap();
        let (_, original, optimal) = &outcome.unrounded_totals[0];

        // Independent re-solve of every EV, summed in the same order.
        let prices = &inputs.prices[&ScenarioKind::FutureFr];
        let mut orig_sum = 0.0;
        let mut opt_sum = 0.0;
        for fleet_ev in &inputs.fleet {
            let r = solve_ev_scenario(
                &inputs.ev,
                fleet_ev,
                prices,
                ScenarioKind::FutureFr,
                &inputs.grid,
                &inputs.opts,
            );
            orig_sum += r.original.unwrap().0.revenue_net_gbp;
            opt_sum += r.optimal.unwrap().0.revenue_net_gbp;
        }
        assert!(
            (original.revenue_net_gbp - orig_sum).abs() < 1e-6,
            "original {} vs per-EV sum {}",
            original.revenue_net_gbp,
            orig_sum
        );
        assert!(
            (optimal.revenue_net_gbp - opt_sum).abs() < 1e-6,
            "optimal {} vs per-EV sum {}",
            optimal.revenue_net_gbp,
            opt_sum
        );
    }

    #[test]
    fn dumb_scenario_earns_no_availability_revenue() {
        let config = small_config(vec![ScenarioKind::DumbCharging], 6);
        let inputs = resolve_inputs(&config, None).unwrap();
        let outcome = run_scenarios(&inputs).unwrap();
        let (_, original, optimal) = &outcome.unrounded_totals[0];
        assert_eq!(original.revenue_fr_gbp, 0.0);
        assert_eq!(optimal.revenue_fr_gbp, 0.0);
        for line in outcome.per_ev_csv.lines().skip(1) {
            let fr: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
            assert_eq!(fr, 0.0, "line {line}");
        }
    }

    #[test]
    fn flat_prices_leave_little_room_for_trip_moves() {
        // Constant availability and energy prices: moving trips changes
        // fleet revenue by well under 1%.
        let dir = tempfile::tempdir().unwrap();
        let energy_path = dir.path().join("flat_energy.csv");
        let mut csv = String::from("hour,buy_gbp_per_kwh,sell_gbp_per_kwh\n");
        for h in 0..24 {
            csv.push_str(&format!("{h},0.04,0\n"));
        }
        std::fs::write(&energy_path, csv).unwrap();

        let mut config = small_config(vec![ScenarioKind::CurrentFr], 10);
        config.prices.energy_csv = energy_path.display().to_string();
        let inputs = resolve_inputs(&config, None).unwrap();
        let outcome = run_scenarios(&inputs).unwrap();
        let (_, original, optimal) = &outcome.unrounded_totals[0];
        let rel = (optimal.revenue_net_gbp - original.revenue_net_gbp).abs()
            / original.revenue_net_gbp.abs().max(1e-9);
        assert!(
            rel <= 0.01,
            "optimal {} vs original {} ({}% apart)",
            optimal.revenue_net_gbp,
            original.revenue_net_gbp,
            rel * 100.0
        );
    }

    #[test]
    fn trip_extension_clamps_to_window() {
        let trip = TripSpec {
            duration_steps: 8,
            travel_energy_kwh: 5.0,
            window_start_step: 0,
            window_end_step: 9,
            original_start_step: 1,
        };
        let (extended, clamped) = extend_trip(&trip, 2);
        assert!(clamped);
        assert_eq!(extended.duration_steps, 9);
        assert_eq!(extended.original_start_step, 0);
        let (unclamped, flag) = extend_trip(&trip, 1);
        assert!(!flag);
        assert_eq!(unclamped.duration_steps, 9);
    }
}

//! `v2g` — day-ahead scheduling of trips, charging and frequency-response
//! availability for commercial EV fleets.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use v2g_cli::runner::{
    self, delay_sensitivity, price_sensitivity, resolve_inputs, run_scenarios, with_pool,
    write_atomic, RunReport,
};
use v2g_core::charging::{build_day_model, solve_day, PlannedTrip, SolveOptions};
use v2g_core::config::RunConfig;
use v2g_core::emissions::{ccgts_avoided, co2_avoided_kg, BaselineHour, EmissionsHour};
use v2g_core::fleet_synth::{synth_fleet, write_fleet_csv};
use v2g_core::fr_prices::{
    build_price_series, demo_energy_prices, read_energy_csv, read_profile_csv, required_pfr,
    synthetic_profile, system_hours, write_price_series_csv,
};
use v2g_core::lp::to_lp_text;
use v2g_core::trips::departure_ready_ev;
use v2g_core::types::{ScenarioKind, TripSpec};

#[derive(Parser)]
#[command(
    name = "v2g",
    version,
    about = "Day-ahead co-optimization of EV fleet trips, charging and frequency response"
)]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default from config, "out").
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Restrict the run to one scenario (dumb, smart, current-fr,
    /// future-fr); repeatable.
    #[arg(long = "scenario", global = true, value_name = "KIND")]
    scenarios: Vec<String>,
    /// Worker threads (0 = number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenarios over the fleet, original and optimal
    /// trips, and write summary.json, per_ev.csv, candidate tables and
    /// emissions.csv.
    Run,
    /// Solve a single EV-day (the config's [trip] section, or a no-trip day)
    /// and write schedule.json plus schedule.csv.
    Schedule {
        /// Dump the solver model in the LP text format.
        #[arg(long, value_name = "PATH")]
        dump_lp: Option<PathBuf>,
    },
    /// Sample a synthetic fleet and write fleet.csv.
    FleetGen {
        /// Fleet kind: maintenance or delivery.
        #[arg(long)]
        fleet: Option<String>,
        /// Season: summer or winter.
        #[arg(long)]
        season: Option<String>,
        /// Number of EVs.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Build an availability price series from a system profile and write
    /// prices.csv.
    Prices {
        /// System profile CSV (hour,demand_mw,wind_mw,solar_mw).
        #[arg(long, value_name = "PATH")]
        profile: Option<PathBuf>,
    },
    /// CCGTs and CO2 avoided for a given hourly DC contribution.
    Emissions {
        /// Constant EV-provided DC in MW, applied to every hour.
        #[arg(long, value_name = "MW")]
        dc_mw: Option<f64>,
        /// Hourly DC CSV as written by `run` (hour,dc_ev_mw,...).
        #[arg(long, value_name = "PATH")]
        fleet_dc: Option<PathBuf>,
    },
    /// Price and trip-delay sensitivity studies.
    Sensitivity,
    /// Merge summary.json files from previous runs into report.csv.
    Report {
        /// summary.json files to merge.
        #[arg(long, num_args = 1.., value_name = "PATH")]
        inputs: Vec<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    // Unknown enum values are usage errors, same exit code as unknown flags.
    if let Err(err) = validate_enum_flags(&cli) {
        eprintln!("error: {err}");
        std::process::exit(2);
    }
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn validate_enum_flags(cli: &Cli) -> Result<(), String> {
    for s in &cli.scenarios {
        s.parse::<ScenarioKind>()?;
    }
    if let Command::FleetGen { fleet, season, .. } = &cli.command {
        if let Some(f) = fleet {
            f.parse::<v2g_core::fleet_synth::FleetKind>()?;
        }
        if let Some(s) = season {
            s.parse::<v2g_core::fr_prices::Season>()?;
        }
    }
    Ok(())
}

fn parse_scenarios(raw: &[String]) -> Result<Vec<ScenarioKind>> {
    raw.iter()
        .map(|s| s.parse::<ScenarioKind>().map_err(|e| anyhow!(e)))
        .collect()
}

/// Load the config and apply command-line overrides.
fn load_config(cli: &Cli) -> Result<(RunConfig, Option<PathBuf>)> {
    let (mut config, dir) = match &cli.config {
        Some(path) => {
            let config = RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?;
            (config, path.parent().map(Path::to_path_buf))
        }
        None => (RunConfig::default(), None),
    };
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.run.out_dir = out.display().to_string();
    }
    if let Some(jobs) = cli.jobs {
        config.run.jobs = jobs;
    }
    let scenarios = parse_scenarios(&cli.scenarios)?;
    if !scenarios.is_empty() {
        config.scenarios.kinds = scenarios;
    }
    config.validate()?;
    Ok((config, dir))
}

fn dispatch(cli: Cli) -> Result<()> {
    let (config, config_dir) = load_config(&cli)?;
    let out_dir = config.out_dir();
    match &cli.command {
        Command::Run => cmd_run(&config, config_dir.as_deref(), &out_dir),
        Command::Schedule { dump_lp } => {
            cmd_schedule(&config, config_dir.as_deref(), &out_dir, dump_lp.as_deref())
        }
        Command::FleetGen { fleet, season, n } => {
            cmd_fleet_gen(&config, &out_dir, fleet.as_deref(), season.as_deref(), *n)
        }
        Command::Prices { profile } => cmd_prices(
            &cli,
            &config,
            config_dir.as_deref(),
            &out_dir,
            profile.as_deref(),
        ),
        Command::Emissions { dc_mw, fleet_dc } => cmd_emissions(
            &config,
            config_dir.as_deref(),
            &out_dir,
            *dc_mw,
            fleet_dc.as_deref(),
        ),
        Command::Sensitivity => cmd_sensitivity(&config, config_dir.as_deref(), &out_dir),
        Command::Report { inputs } => cmd_report(inputs, &out_dir),
    }
}

fn cmd_run(config: &RunConfig, config_dir: Option<&Path>, out_dir: &Path) -> Result<()> {
    let inputs = resolve_inputs(config, config_dir)?;
    let outcome = with_pool(config.run.jobs, || run_scenarios(&inputs))??;
    runner::write_outputs(&outcome, out_dir)?;
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    let mut any_compared = false;
    for s in &outcome.report.scenarios {
        any_compared |= s.compared_count > 0;
        println!(
            "{:>10}: {} of {} EVs compared, original net £{:.4}, optimal net £{:.4}{}",
            s.scenario,
            s.compared_count,
            s.ev_count,
            s.original.revenue_net_gbp,
            s.optimal.revenue_net_gbp,
            s.uplift_pct
                .map(|u| format!(", uplift {u:+.2}%"))
                .unwrap_or_default()
        );
        for inf in &s.infeasible {
            eprintln!(
                "infeasible: {} {} ({}): {}",
                s.scenario, inf.ev_id, inf.mode, inf.message
            );
        }
    }
    if let Some(e) = &outcome.report.emissions {
        println!(
            "emissions ({} x{} EVs): mean {:.4} CCGTs avoided, {:.0} kg CO2/month",
            e.scenario, e.fleet_scale, e.mean_ccgts_avoided, e.co2_avoided_kg_per_month
        );
    }
    println!(
        "report written to {}",
        out_dir.join("summary.json").display()
    );
    if !any_compared {
        bail!("no EV could be scheduled in any scenario");
    }
    Ok(())
}

fn cmd_schedule(
    config: &RunConfig,
    config_dir: Option<&Path>,
    out_dir: &Path,
    dump_lp: Option<&Path>,
) -> Result<()> {
    let grid = config.grid();
    let base_ev = config.ev_params();
    let opts = config.solve_options();
    let scenario = *config
        .scenarios
        .kinds
        .first()
        .ok_or_else(|| anyhow!("no scenario configured"))?;
    let prices = scenario_prices(config, config_dir, scenario)?;

    let (ev, planned) = match &config.trip {
        Some(t) => {
            let trip = TripSpec {
                duration_steps: t.duration_steps,
                travel_energy_kwh: t.travel_energy_kwh,
                window_start_step: t.window_start_step,
                window_end_step: t.window_end_step,
                original_start_step: t.original_start_step,
            };
            let violations = v2g_core::types::validate(&base_ev, &trip, &prices, &grid);
            if !violations.is_empty() {
                bail!(
                    "invalid [trip] section: {}",
                    violations
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("; ")
                );
            }
            (
                departure_ready_ev(&base_ev, &trip, &grid, opts.raise_start_soc),
                Some(PlannedTrip::at_original_start(&trip)),
            )
        }
        None => (base_ev, None),
    };
    let solve_opts = SolveOptions {
        raise_start_soc: false,
        ..opts
    };

    if let Some(path) = dump_lp {
        let mask = match &planned {
            Some(t) => (0..grid.step_count)
                .map(|s| !(t.start_step..t.start_step + t.duration_steps).contains(&s))
                .collect::<Vec<_>>(),
            None => vec![true; grid.step_count],
        };
        let handle = build_day_model(
            &ev,
            &mask,
            &prices,
            scenario,
            planned.as_ref(),
            &grid,
            &solve_opts,
        )?;
        write_atomic(path, to_lp_text(&handle.model).as_bytes())?;
        println!("model dumped to {}", path.display());
    }

    let day = solve_day(&ev, planned.as_ref(), &prices, scenario, &grid, &solve_opts)?;
    for warning in &day.warnings {
        eprintln!("warning: {warning}");
    }

    #[derive(serde::Serialize)]
    struct ScheduleOut<'a> {
        scenario: &'a str,
        start_energy_kwh: f64,
        objective_gbp: f64,
        achieved_gap: f64,
        node_count: usize,
        schedule: &'a v2g_core::types::Schedule,
    }
    let json = serde_json::to_string_pretty(&ScheduleOut {
        scenario: scenario.as_str(),
        start_energy_kwh: day.start_energy_kwh,
        objective_gbp: runner::round4(day.objective_gbp),
        achieved_gap: day.achieved_gap,
        node_count: day.node_count,
        schedule: &day.schedule,
    })? + "\n";
    write_atomic(&out_dir.join("schedule.json"), json.as_bytes())?;
    write_atomic(
        &out_dir.join("schedule.csv"),
        v2g_core::charging::schedule_csv(&day.schedule).as_bytes(),
    )?;
    println!(
        "{}: net £{:.4} (availability £{:.4}, energy £{:.4}, penalty £{:.4})",
        scenario.as_str(),
        day.schedule.revenue_net_gbp,
        day.schedule.revenue_fr_gbp,
        day.schedule.cost_energy_gbp,
        day.schedule.penalty_gbp
    );
    println!("written to {}", out_dir.join("schedule.json").display());
    Ok(())
}

/// Price series for one scenario, honoring the config's CSV paths.
fn scenario_prices(
    config: &RunConfig,
    config_dir: Option<&Path>,
    scenario: ScenarioKind,
) -> Result<v2g_core::types::PriceSeries> {
    let grid = config.grid();
    let energy = if config.prices.energy_csv.is_empty() {
        demo_energy_prices(config.fleet.season, grid.start_hour_of_day)
            .into_iter()
            .take(grid.step_count)
            .collect()
    } else {
        let path = resolve(config_dir, &config.prices.energy_csv);
        read_energy_csv(&path).with_context(|| format!("reading {}", path.display()))?
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
        .into_iter()
        .take(grid.step_count)
        .collect()
    } else {
        let path = resolve(config_dir, &config.prices.profile_csv);
        read_profile_csv(&path).with_context(|| format!("reading {}", path.display()))?
    };
    Ok(build_price_series(
        &profile,
        &config.system,
        scenario,
        config.scenarios.current_dc_price_gbp_per_mw_h,
        &energy,
    )?)
}

fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let path = Path::new(value);
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn cmd_fleet_gen(
    config: &RunConfig,
    out_dir: &Path,
    fleet: Option<&str>,
    season: Option<&str>,
    n: Option<usize>,
) -> Result<()> {
    let kind = match fleet {
        Some(s) => s.parse().map_err(|e: String| anyhow!(e))?,
        None => config.fleet.kind,
    };
    let season = match season {
        Some(s) => s.parse().map_err(|e: String| anyhow!(e))?,
        None => config.fleet.season,
    };
    let n = n.unwrap_or(config.fleet.n);
    let fleet = synth_fleet(kind, season, n, config.run.seed, &config.grid());
    let mut buf = Vec::new();
    write_fleet_csv(&mut buf, &fleet)?;
    let path = out_dir.join("fleet.csv");
    write_atomic(&path, &buf)?;
    println!(
        "{} EVs ({} {:?}, seed {}) written to {}",
        fleet.len(),
        kind.as_str(),
        season,
        config.run.seed,
        path.display()
    );
    Ok(())
}

fn cmd_prices(
    cli: &Cli,
    config: &RunConfig,
    config_dir: Option<&Path>,
    out_dir: &Path,
    profile: Option<&Path>,
) -> Result<()> {
    let grid = config.grid();
    let scenario = match parse_scenarios(&cli.scenarios)?.first() {
        Some(&s) => s,
        None => ScenarioKind::FutureFr,
    };
    let mut effective = config.clone();
    if let Some(path) = profile {
        effective.prices.profile_csv = path.display().to_string();
    }
    let prices = scenario_prices(&effective, config_dir, scenario)?;
    let mut buf = Vec::new();
    write_price_series_csv(&mut buf, &prices)?;
    let path = out_dir.join("prices.csv");
    write_atomic(&path, &buf)?;
    println!(
        "{} price rows ({}) written to {}",
        grid.step_count,
        scenario.as_str(),
        path.display()
    );
    Ok(())
}

fn cmd_emissions(
    config: &RunConfig,
    config_dir: Option<&Path>,
    out_dir: &Path,
    dc_mw: Option<f64>,
    fleet_dc: Option<&Path>,
) -> Result<()> {
    let grid = config.grid();
    let profile = if config.prices.profile_csv.is_empty() {
        synthetic_profile(
            config.fleet.season,
            config.prices.extreme_day,
            grid.start_hour_of_day,
        )
    } else {
        let path = resolve(config_dir, &config.prices.profile_csv);
        read_profile_csv(&path)?
    };
    let hours = system_hours(&profile, &config.system)?;

    let dc_by_hour: Vec<f64> = match (dc_mw, fleet_dc) {
        (Some(mw), None) => vec![mw; hours.len()],
        (None, Some(path)) => read_dc_csv(path, hours.len())?,
        (None, None) => bail!("provide --dc-mw <MW> or --fleet-dc <csv>"),
        (Some(_), Some(_)) => bail!("--dc-mw and --fleet-dc are mutually exclusive"),
    };

    let mut rows = Vec::with_capacity(hours.len());
    let mut x_sum = 0.0;
    for (t, hour) in hours.iter().enumerate() {
        let baseline = BaselineHour {
            inertia_mva_s: hour.inertia_mva_s,
            pfr_mw: required_pfr(
                hour.inertia_mva_s,
                config.system.dc_volume_mw,
                &config.system,
            )?,
            dc_mw: config.system.dc_volume_mw,
        };
        let x = ccgts_avoided(
            &baseline,
            dc_by_hour[t],
            &config.system,
            &config.emissions.ccgt,
        )?;
        x_sum += x;
        rows.push(EmissionsHour {
            hour: t,
            dc_ev_mw: dc_by_hour[t],
            x_avoided: x,
        });
    }
    let mean_x = x_sum / rows.len() as f64;
    let co2 = co2_avoided_kg(
        mean_x,
        config.emissions.hours_per_month,
        &config.emissions.ccgt,
        config.emissions.energy_basis_mw,
    );

    let mut buf = Vec::new();
    v2g_core::emissions::write_emissions_csv(&mut buf, &rows)?;
    write_atomic(&out_dir.join("emissions.csv"), &buf)?;
    #[derive(serde::Serialize)]
    struct Summary {
        mean_ccgts_avoided: f64,
        co2_avoided_kg_per_month: f64,
        energy_basis_mw: f64,
        hours_per_month: f64,
    }
    let json = serde_json::to_string_pretty(&Summary {
        mean_ccgts_avoided: runner::round4(mean_x),
        co2_avoided_kg_per_month: runner::round4(co2),
        energy_basis_mw: config.emissions.energy_basis_mw,
        hours_per_month: config.emissions.hours_per_month,
    })? + "\n";
    write_atomic(&out_dir.join("emissions_summary.json"), json.as_bytes())?;
    println!(
        "mean {:.4} CCGTs avoided, {:.0} kg CO2/month; written to {}",
        mean_x,
        co2,
        out_dir.join("emissions.csv").display()
    );
    Ok(())
}

fn read_dc_csv(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            bail!(
                "{}: line {} has fewer than 2 fields",
                path.display(),
                idx + 1
            );
        }
        out.push(fields[1].trim().parse::<f64>().with_context(|| {
            format!(
                "{}: line {}: bad dc value '{}'",
                path.display(),
                idx + 1,
                fields[1]
            )
        })?);
    }
    if out.len() != expected {
        bail!(
            "{}: expected {} data rows, got {}",
            path.display(),
            expected,
            out.len()
        );
    }
    Ok(out)
}

fn cmd_sensitivity(config: &RunConfig, config_dir: Option<&Path>, out_dir: &Path) -> Result<()> {
    let inputs = resolve_inputs(config, config_dir)?;
    let (price, delay) = with_pool(config.run.jobs, || {
        let price = price_sensitivity(&inputs, &[1.0, 0.75, 0.5]);
        let delay = delay_sensitivity(&inputs, &[1, 2]);
        (price, delay)
    })?;
    let price = price?;
    let delay = delay?;

    write_atomic(
        &out_dir.join("sensitivity_price.json"),
        (serde_json::to_string_pretty(&price)? + "\n").as_bytes(),
    )?;
    let mut price_csv =
        String::from("scale,original_net_gbp,optimal_net_gbp,uplift_pct,fr_revenue_fixed_gbp\n");
    for p in &price.scales {
        price_csv.push_str(&format!(
            "{},{:.4},{:.4},{},{:.4}\n",
            p.scale,
            p.original.revenue_net_gbp,
            p.optimal.revenue_net_gbp,
            p.uplift_pct.map(|u| format!("{u:.4}")).unwrap_or_default(),
            p.fr_revenue_fixed_schedules_gbp
        ));
    }
    write_atomic(&out_dir.join("sensitivity_price.csv"), price_csv.as_bytes())?;

    write_atomic(
        &out_dir.join("sensitivity_delay.json"),
        (serde_json::to_string_pretty(&delay)? + "\n").as_bytes(),
    )?;
    let mut delay_csv = String::from("delay_steps,optimal_net_gbp,reduction_pct,clamped_trips\n");
    for d in &delay.delays {
        delay_csv.push_str(&format!(
            "{},{:.4},{:.4},{}\n",
            d.delay_steps, d.optimal.revenue_net_gbp, d.reduction_pct, d.clamped_trips
        ));
    }
    write_atomic(&out_dir.join("sensitivity_delay.csv"), delay_csv.as_bytes())?;

    for p in &price.scales {
        println!(
            "price x{:.2}: original £{:.4}, optimal £{:.4}{}",
            p.scale,
            p.original.revenue_net_gbp,
            p.optimal.revenue_net_gbp,
            p.uplift_pct
                .map(|u| format!(", uplift {u:+.2}%"))
                .unwrap_or_default()
        );
    }
    for d in &delay.delays {
        println!(
            "delay +{} h: optimal £{:.4} ({:.2}% below zero-delay)",
            d.delay_steps, d.optimal.revenue_net_gbp, d.reduction_pct
        );
    }
    println!("reports written to {}", out_dir.display());
    Ok(())
}

fn cmd_report(inputs: &[PathBuf], out_dir: &Path) -> Result<()> {
    if inputs.is_empty() {
        bail!("report needs at least one --inputs summary.json");
    }
    let mut csv = String::from(
        "file,scenario,compared,original_net_gbp,optimal_net_gbp,uplift_pct,co2_kg_per_month\n",
    );
    for path in inputs {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report: RunReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let co2 = report
            .emissions
            .as_ref()
            .map(|e| format!("{:.3}", e.co2_avoided_kg_per_month))
            .unwrap_or_default();
        for s in &report.scenarios {
            csv.push_str(&format!(
                "{},{},{},{:.4},{:.4},{},{}\n",
                path.display(),
                s.scenario,
                s.compared_count,
                s.original.revenue_net_gbp,
                s.optimal.revenue_net_gbp,
                s.uplift_pct.map(|u| format!("{u:.4}")).unwrap_or_default(),
                co2
            ));
        }
    }
    let path = out_dir.join("report.csv");
    write_atomic(&path, csv.as_bytes())?;
    print!("{csv}");
    println!("merged report written to {}", path.display());
    Ok(())
}

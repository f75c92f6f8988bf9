//! End-to-end smoke tests of the installed binary: subcommand happy paths,
//! output formats and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn v2g() -> Command {
    Command::new(env!("CARGO_BIN_EXE_v2g"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn v2g");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn prices_writes_24_row_series() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        v2g()
            .arg("prices")
            .arg("--profile")
            .arg(repo_root().join("fixtures/profile_summer.csv"))
            .arg("--out")
            .arg(dir.path()),
    );
    let csv = std::fs::read_to_string(dir.path().join("prices.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("hour,buy,sell,fr_gbp_per_kw"));
    assert_eq!(lines.count(), 24);
}

#[test]
fn schedule_toy_fixture_reports_thirty_pounds() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        v2g()
            .arg("schedule")
            .arg("--config")
            .arg(repo_root().join("fixtures/config_toy.toml"))
            .arg("--out")
            .arg(dir.path()),
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("schedule.json")).unwrap())
            .unwrap();
    let revenue = json["schedule"]["revenue_net_gbp"].as_f64().unwrap();
    assert!((revenue - 30.0).abs() < 1e-9, "revenue {revenue}");
    let csv = std::fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert!(csv.starts_with("step,connected,c_kw,d_kw,bsup_c_kw,bsup_d_kw,e_kwh\n"));
}

#[test]
fn fleet_gen_is_reproducible() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        run_ok(
            v2g()
                .arg("fleet-gen")
                .arg("--fleet")
                .arg("maintenance")
                .arg("--season")
                .arg("summer")
                .arg("--n")
                .arg("100")
                .arg("--seed")
                .arg("7")
                .arg("--out")
                .arg(dir.path()),
        );
    }
    let a = std::fs::read(dir_a.path().join("fleet.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("fleet.csv")).unwrap();
    assert_eq!(a, b, "same seed must give identical fleet files");
    let text = String::from_utf8(a).unwrap();
    assert!(
        text.starts_with("ev_id,fleet_kind,original_start_step,duration_steps,travel_energy_kwh\n")
    );
    assert_eq!(text.lines().count(), 101);
}

#[test]
fn unknown_scenario_value_is_a_usage_error() {
    let out = v2g()
        .arg("run")
        .arg("--scenario")
        .arg("bogus")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = v2g().arg("definitely-not-a-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn emissions_with_constant_contribution() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        v2g()
            .arg("emissions")
            .arg("--dc-mw")
            .arg("100")
            .arg("--out")
            .arg(dir.path()),
    );
    let csv = std::fs::read_to_string(dir.path().join("emissions.csv")).unwrap();
    assert!(csv.starts_with("hour,dc_ev_mw,x_avoided\n"));
    assert_eq!(csv.lines().count(), 25);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("emissions_summary.json")).unwrap(),
    )
    .unwrap();
    assert!(summary["mean_ccgts_avoided"].as_f64().unwrap() > 0.0);
}

#[test]
fn run_demo_config_and_merge_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(
        v2g()
            .arg("run")
            .arg("--config")
            .arg(repo_root().join("fixtures/config_demo_summer.toml"))
            .arg("--scenario")
            .arg("future-fr")
            .arg("--jobs")
            .arg("2")
            .arg("--out")
            .arg(dir.path()),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("future-fr"), "stdout: {stdout}");
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("per_ev.csv").exists());
    assert!(dir.path().join("emissions.csv").exists());
    assert!(dir
        .path()
        .join("future-fr")
        .join("candidates_ev000.csv")
        .exists());

    // Fleet aggregate equals the sum of per-EV values.
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    let total = summary["scenarios"][0]["optimal"]["revenue_net_gbp"]
        .as_f64()
        .unwrap();
    let per_ev = std::fs::read_to_string(dir.path().join("per_ev.csv")).unwrap();
    let sum: f64 = per_ev
        .lines()
        .skip(1)
        .filter(|l| l.contains(",optimal,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!(
        (total - sum).abs() < 1e-2,
        "summary total {total} vs per-EV sum {sum}"
    );

    let report_dir = tempfile::tempdir().unwrap();
    run_ok(
        v2g()
            .arg("report")
            .arg("--inputs")
            .arg(dir.path().join("summary.json"))
            .arg("--out")
            .arg(report_dir.path()),
    );
    let merged = std::fs::read_to_string(report_dir.path().join("report.csv")).unwrap();
    assert!(merged.contains("future-fr"));
}

#[test]
fn sensitivity_reports_scale_linearly_for_fixed_schedules() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        v2g()
            .arg("sensitivity")
            .arg("--config")
            .arg(repo_root().join("fixtures/config_extreme_summer.toml"))
            .arg("--jobs")
            .arg("2")
            .arg("--out")
            .arg(dir.path()),
    );
    let price: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("sensitivity_price.json")).unwrap(),
    )
    .unwrap();
    let scales = price["scales"].as_array().unwrap();
    assert_eq!(scales.len(), 3);
    // Re-valuing the scale-1.0 schedules at 0.75x prices scales the
    // availability revenue by exactly 0.75.
    let base_fixed = scales[0]["fr_revenue_fixed_schedules_gbp"]
        .as_f64()
        .unwrap();
    let fixed_75 = scales[1]["fr_revenue_fixed_schedules_gbp"]
        .as_f64()
        .unwrap();
    assert!(
        (fixed_75 - 0.75 * base_fixed).abs() < 2e-4,
        "{fixed_75} vs 0.75 * {base_fixed}"
    );

    let delay: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("sensitivity_delay.json")).unwrap(),
    )
    .unwrap();
    let points = delay["delays"].as_array().unwrap();
    let baseline = delay["baseline_optimal"]["revenue_net_gbp"]
        .as_f64()
        .unwrap();
    let one = points[0]["optimal"]["revenue_net_gbp"].as_f64().unwrap();
    let two = points[1]["optimal"]["revenue_net_gbp"].as_f64().unwrap();
    assert!(
        one <= baseline + 1e-6,
        "delay 1 ({one}) above baseline ({baseline})"
    );
    assert!(two <= one + 1e-6, "delay 2 ({two}) above delay 1 ({one})");
}

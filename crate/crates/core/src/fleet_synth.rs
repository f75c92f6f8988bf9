//! Synthetic commercial-fleet generation.
//!
//! Observed 24-hour driving patterns are summarised by a Gaussian bump
//! (height, centre, width) fitted with damped Gauss-Newton least squares.
//! Synthetic fleets are sampled by drawing (height, centre) pairs from the
//! fitted curve — the width stays fixed since it encodes the fleet's typical
//! trip length — and dressing each draw with trip duration and travel energy
//! drawn from the fleet's characteristic statistics.
//!
//! No trial data ships with the repository; the built-in templates carry
//! characteristic per-fleet trip statistics, and the fit parameters derived
//! from them are project calibrations.

use crate::types::{TimeGrid, TripSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

/// A 24-hour driving pattern: `-1` while plugged in, `0` on the road, and
/// the travel energy (kWh) at the return step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingPattern {
    pub x: Vec<f64>,
}

/// Fitted Gaussian bump `a * exp(-(t - b)^2 / c^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub residual_std: f64,
}

impl GaussianFit {
    pub fn value(&self, t: f64) -> f64 {
        let z = (t - self.b) / self.c;
        self.a * (-z * z).exp()
    }
}

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("need at least {needed} distinct sample points, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate samples: all values equal")]
    Degenerate,
    #[error(
        "fit did not converge after {iterations} iterations (last a={a:.6}, b={b:.6}, c={c:.6})"
    )]
    Diverged {
        iterations: usize,
        a: f64,
        b: f64,
        c: f64,
    },
    #[error("no trip found in pattern")]
    NoTrip,
    #[error("malformed pattern: {0}")]
    Malformed(String),
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Nonlinear least-squares fit of the Gaussian bump by Gauss-Newton with
/// Levenberg-style damping (start 1e-3, x10 on reject, /10 on accept).
pub fn fit_gaussian(samples: &[(f64, f64)]) -> Result<GaussianFit, FleetError> {
    let mut ts: Vec<f64> = samples.iter().map(|&(t, _)| t).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if ts.len() < 3 {
        return Err(FleetError::TooFewSamples {
            needed: 3,
            got: ts.len(),
        });
    }
    let vmax = samples.iter().map(|&(_, v)| v).fold(f64::MIN, f64::max);
    let vmin = samples.iter().map(|&(_, v)| v).fold(f64::MAX, f64::min);
    if (vmax - vmin).abs() < 1e-12 {
        return Err(FleetError::Degenerate);
    }

    // Initial guess: peak sample, centre at its location, width from the
    // half-maximum spread.
    let (t_peak, _) = samples.iter().fold(
        (0.0, f64::MIN),
        |acc, &(t, v)| if v > acc.1 { (t, v) } else { acc },
    );
    let mut a = vmax;
    let mut b = t_peak;
    let mut c = samples
        .iter()
        .filter(|&&(_, v)| v >= vmax / 2.0)
        .map(|&(t, _)| (t - t_peak).abs())
        .fold(0.0, f64::max)
        .max(0.5);

    let sse = |a: f64, b: f64, c: f64| -> f64 {
        samples
            .iter()
            .map(|&(t, v)| {
                let z = (t - b) / c;
                let r = v - a * (-z * z).exp();
                r * r
            })
            .sum()
    };

    let max_iterations = 200;
    let mut lambda = 1e-3;
    let mut current = sse(a, b, c);
    let mut converged = false;
    for _ in 0..max_iterations {
        // Normal equations J^T J delta = J^T r with Marquardt damping.
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for &(t, v) in samples {
            let z = (t - b) / c;
            let g = (-z * z).exp();
            let model = a * g;
            let r = v - model;
            let j = [
                g,
                a * g * 2.0 * (t - b) / (c * c),
                a * g * 2.0 * (t - b) * (t - b) / (c * c * c),
            ];
            for i in 0..3 {
                for k in 0..3 {
                    jtj[i][k] += j[i] * j[k];
                }
                jtr[i] += j[i] * r;
            }
        }
        let mut damped = jtj;
        for i in 0..3 {
            damped[i][i] += lambda * jtj[i][i].max(1e-12);
        }
        let Some(delta) = solve3(&damped, &jtr) else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
            continue;
        };
        let (na, nb, nc) = (a + delta[0], b + delta[1], (c + delta[2]).max(1e-6));
        let next = sse(na, nb, nc);
        if next < current {
            let step = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            a = na;
            b = nb;
            c = nc;
            let improvement = current - next;
            current = next;
            lambda = (lambda / 10.0).max(1e-15);
            if step < 1e-10 || improvement <= 1e-15 * (1.0 + current) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // Damping saturated: no further progress possible.
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(FleetError::Diverged {
            iterations: max_iterations,
            a,
            b,
            c,
        });
    }
    let dof = samples.len().saturating_sub(3).max(1);
    Ok(GaussianFit {
        a,
        b,
        c: c.abs(),
        residual_std: (current / dof as f64).sqrt(),
    })
}

#[allow(clippy::needless_range_loop)] // parallel row indexing in the elimination
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..3 {
        let mut piv = col;
        for r in col + 1..3 {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                for k in col..3 {
                    m[r][k] -= f * m[col][k];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    Some([rhs[0] / m[0][0], rhs[1] / m[1][1], rhs[2] / m[2][2]])
}

/// Commercial fleet kind. The travel windows are fixed per kind: the
/// maintenance fleet may travel in a 22-hour window from the start of the
/// day, the delivery fleet in a 16-hour window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FleetKind {
    Maintenance,
    Delivery,
}

impl FleetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FleetKind::Maintenance => "maintenance",
            FleetKind::Delivery => "delivery",
        }
    }

    pub fn window_hours(self) -> usize {
        match self {
            FleetKind::Maintenance => 22,
            FleetKind::Delivery => 16,
        }
    }
}

impl std::str::FromStr for FleetKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "maintenance" => Ok(FleetKind::Maintenance),
            "delivery" => Ok(FleetKind::Delivery),
            other => Err(format!(
                "unknown fleet kind '{other}' (expected maintenance or delivery)"
            )),
        }
    }
}

pub use crate::fr_prices::Season;

/// Characteristic per-fleet trip statistics plus the travel window, per season.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetTemplate {
    pub kind: FleetKind,
    pub season: Season,
    pub travel_start_mean_h: f64,
    pub duration_mean_h: f64,
    pub duration_min_h: f64,
    pub duration_max_h: f64,
    pub travel_energy_mean_kwh: f64,
    pub window_start_step: usize,
    pub window_end_step: usize,
}

impl FleetTemplate {
    /// Template for one fleet and season. Start times are hours of day on a
    /// 7am grid.
    pub fn new(kind: FleetKind, season: Season) -> Self {
        let (travel_start_mean_h, duration_mean_h, duration_min_h, duration_max_h, energy) =
            match (kind, season) {
                (FleetKind::Delivery, Season::Winter) => (10.5, 5.0, 0.5, 6.0, 8.9),
                (FleetKind::Maintenance, Season::Winter) => (8.0, 7.5, 7.0, 8.0, 4.2),
                (FleetKind::Delivery, Season::Summer) => (7.5, 6.5, 0.5, 9.0, 7.7),
                (FleetKind::Maintenance, Season::Summer) => (8.0, 6.5, 5.0, 8.0, 5.7),
            };
        FleetTemplate {
            kind,
            season,
            travel_start_mean_h,
            duration_mean_h,
            duration_min_h,
            duration_max_h,
            travel_energy_mean_kwh: energy,
            window_start_step: 0,
            window_end_step: kind.window_hours(),
        }
    }

    /// Gaussian parameters representing this template's mean pattern on a
    /// grid starting at `grid_start_hour`: the bump is centred on the mean
    /// trip midpoint with a width tied to the mean trip length. Invented
    /// calibration, not fitted to trial data.
    pub fn canonical_fit(&self, grid_start_hour: u32) -> GaussianFit {
        let centre =
            self.travel_start_mean_h - f64::from(grid_start_hour) + self.duration_mean_h / 2.0;
        GaussianFit {
            a: self.travel_energy_mean_kwh,
            b: centre,
            c: (self.duration_mean_h / 2.0).max(1.0),
            residual_std: 0.0,
        }
    }
}

/// Sample `n` synthetic driving patterns from a fitted curve.
///
/// Heights are drawn uniformly in `[0, fit.a]` and centres uniformly over
/// the steps where the drawn curve is meaningfully positive (`> 1e-3`); the
/// width is not varied. Trip durations are drawn uniformly within the
/// template's min/max, shifted to the template mean and clamped; travel
/// energy follows a normal around the template mean (sigma = 20% of the
/// mean) truncated at zero. Deterministic for a fixed seed.
pub fn sample_patterns(
    fit: &GaussianFit,
    template: &FleetTemplate,
    n: usize,
    seed: u64,
) -> Vec<DrivingPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = 24usize;
    let energy_dist = Normal::new(
        template.travel_energy_mean_kwh,
        0.2 * template.travel_energy_mean_kwh,
    )
    .expect("positive sigma");
    let mid = (template.duration_min_h + template.duration_max_h) / 2.0;
    let shift = template.duration_mean_h - mid;

    (0..n)
        .map(|_| {
            let height: f64 = rng.gen_range(0.0..=fit.a.max(f64::MIN_POSITIVE));
            let drawn = GaussianFit { a: height, ..*fit };
            let eligible: Vec<usize> = (0..steps)
                .filter(|&t| drawn.value(t as f64) > 1e-3)
                .collect();
            let centre = if eligible.is_empty() {
                fit.b.round().clamp(0.0, (steps - 1) as f64) as usize
            } else {
                eligible[rng.gen_range(0..eligible.len())]
            };

            let duration_h = (rng.gen_range(template.duration_min_h..=template.duration_max_h)
                + shift)
                .clamp(template.duration_min_h, template.duration_max_h);
            let duration = (duration_h.round() as usize).max(1);

            let energy = loop {
                let e = energy_dist.sample(&mut rng);
                if e > 0.0 {
                    break e;
                }
            };

            // Centre the trip on the drawn step, then clamp into the travel
            // window while keeping the return step inside the horizon.
            let latest_start = template
                .window_end_step
                .min(steps - 1)
                .saturating_sub(duration);
            let start = ((centre as f64 - duration as f64 / 2.0).round() as i64)
                .clamp(template.window_start_step as i64, latest_start as i64)
                as usize;

            let mut x = vec![-1.0; steps];
            for slot in x.iter_mut().skip(start).take(duration) {
                *slot = 0.0;
            }
            x[start + duration] = energy;
            DrivingPattern { x }
        })
        .collect()
}

/// Convert a pattern into a [`TripSpec`] using the fleet's travel window.
pub fn pattern_to_trip(
    pattern: &DrivingPattern,
    template: &FleetTemplate,
) -> Result<TripSpec, FleetError> {
    let run: Vec<usize> = pattern
        .x
        .iter()
        .enumerate()
        .filter(|&(_, v)| *v != -1.0)
        .map(|(t, _)| t)
        .collect();
    if run.is_empty() {
        return Err(FleetError::NoTrip);
    }
    let contiguous = run.windows(2).all(|w| w[1] == w[0] + 1);
    if !contiguous {
        return Err(FleetError::Malformed(
            "trip steps are not contiguous".into(),
        ));
    }
    let last = *run.last().expect("nonempty");
    let energy = pattern.x[last];
    if energy <= 0.0 {
        return Err(FleetError::Malformed(
            "no travel energy recorded at the return step".into(),
        ));
    }
    if run.len() < 2 {
        return Err(FleetError::Malformed(
            "pattern has a return entry but no trip steps".into(),
        ));
    }
    let trip_steps = &run[..run.len() - 1];
    if trip_steps.iter().any(|&t| pattern.x[t] != 0.0) {
        return Err(FleetError::Malformed(
            "trip steps must be zero before the return entry".into(),
        ));
    }
    let original_start = trip_steps[0];
    let duration = trip_steps.len();
    if original_start < template.window_start_step
        || original_start + duration > template.window_end_step
    {
        return Err(FleetError::Malformed(format!(
            "trip [{original_start}, {}) falls outside the travel window [{}, {})",
            original_start + duration,
            template.window_start_step,
            template.window_end_step
        )));
    }
    Ok(TripSpec {
        duration_steps: duration,
        travel_energy_kwh: energy,
        window_start_step: template.window_start_step,
        window_end_step: template.window_end_step,
        original_start_step: original_start,
    })
}

/// One synthetic EV: an identifier, its fleet kind and its trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetEv {
    pub id: String,
    pub kind: FleetKind,
    pub trip: TripSpec,
}

/// Generate a synthetic fleet from the built-in template for a fleet kind
/// and season.
pub fn synth_fleet(
    kind: FleetKind,
    season: Season,
    n: usize,
    seed: u64,
    grid: &TimeGrid,
) -> Vec<FleetEv> {
    let template = FleetTemplate::new(kind, season);
    let fit = template.canonical_fit(grid.start_hour_of_day);
    sample_patterns(&fit, &template, n, seed)
        .iter()
        .enumerate()
        .map(|(i, pattern)| FleetEv {
            id: format!("ev{i:03}"),
            kind,
            trip: pattern_to_trip(pattern, &template).expect("synthetic patterns are well formed"),
        })
        .collect()
}

/// Write the fleet CSV: `ev_id,fleet_kind,original_start_step,duration_steps,travel_energy_kwh`.
pub fn write_fleet_csv(mut w: impl Write, fleet: &[FleetEv]) -> std::io::Result<()> {
    writeln!(
        w,
        "ev_id,fleet_kind,original_start_step,duration_steps,travel_energy_kwh"
    )?;
    for ev in fleet {
        writeln!(
            w,
            "{},{},{},{},{:.3}",
            ev.id,
            ev.kind.as_str(),
            ev.trip.original_start_step,
            ev.trip.duration_steps,
            ev.trip.travel_energy_kwh
        )?;
    }
    Ok(())
}

/// Read a fleet CSV written by [`write_fleet_csv`]. Travel windows are
/// reconstructed from the fleet kind.
pub fn read_fleet_csv(path: &Path) -> Result<Vec<FleetEv>, FleetError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if idx == 0 {
            let expected = "ev_id,fleet_kind,original_start_step,duration_steps,travel_energy_kwh";
            if line.trim() != expected {
                return Err(FleetError::Csv {
                    line: 1,
                    message: format!("expected header '{expected}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(FleetError::Csv {
                line: idx + 1,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let kind: FleetKind = fields[1].parse().map_err(|e| FleetError::Csv {
            line: idx + 1,
            message: e,
        })?;
        let parse_num = |s: &str| -> Result<f64, FleetError> {
            s.parse().map_err(|_| FleetError::Csv {
                line: idx + 1,
                message: format!("cannot parse '{s}'"),
            })
        };
        let original_start_step = parse_num(fields[2])? as usize;
        let duration_steps = parse_num(fields[3])? as usize;
        out.push(FleetEv {
            id: fields[0].to_string(),
            kind,
            trip: TripSpec {
                duration_steps,
                travel_energy_kwh: parse_num(fields[4])?,
                window_start_step: 0,
                window_end_step: kind.window_hours(),
                original_start_step,
            },
        });
    }
    Ok(out)
}

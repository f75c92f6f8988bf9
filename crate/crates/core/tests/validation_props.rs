//! Property tests: `validate` agrees with a direct restatement of the typed
//! invariants under randomized inputs, and the grid mask behaves like its
//! definition.

use proptest::prelude::*;
use v2g_core::types::{derive_grid_mask, validate, EvParams, PriceSeries, TimeGrid, TripSpec};

fn arb_ev() -> impl Strategy<Value = EvParams> {
    (
        0.0..10.0f64,  // e_min
        20.0..80.0f64, // e_max
        -5.0..15.0f64, // p_max (may be invalid)
        0.05..1.2f64,  // eta_c (may exceed 1)
        0.05..1.2f64,  // eta_d
        0.0..90.0f64,  // e_start
        0.0..90.0f64,  // e_req
        0.0..90.0f64,  // e_end_min
        -1.0..30.0f64, // t_sustain
        -0.5..1.5f64,  // delta
    )
        .prop_map(
            |(e_min, e_max, p_max, eta_c, eta_d, e_start, e_req, e_end, t_s, delta)| EvParams {
                e_min_kwh: e_min,
                e_max_kwh: e_max,
                p_max_kw: p_max,
                eta_c,
                eta_d,
                e_start_kwh: e_start,
                e_req_kwh: e_req,
                e_end_min_kwh: e_end,
                t_sustain_h: t_s,
                delta_penalty: delta,
            },
        )
}

fn arb_trip() -> impl Strategy<Value = TripSpec> {
    (1usize..12, 0usize..10, 0usize..30, 0usize..20, 0.0..40.0f64).prop_map(
        |(duration, window_start, window_end, original, energy)| TripSpec {
            duration_steps: duration,
            travel_energy_kwh: energy,
            window_start_step: window_start,
            window_end_step: window_end,
            original_start_step: original,
        },
    )
}

/// Direct restatement of the typed invariants, independent of `validate`.
fn invariants_hold(ev: &EvParams, trip: &TripSpec, prices: &PriceSeries, grid: &TimeGrid) -> bool {
    let grid_ok = grid.step_count >= 2 && grid.step_hours > 0.0 && grid.start_hour_of_day < 24;
    let ev_ok = 0.0 <= ev.e_min_kwh
        && ev.e_min_kwh <= ev.e_start_kwh
        && ev.e_start_kwh <= ev.e_max_kwh
        && ev.e_min_kwh <= ev.e_req_kwh
        && ev.e_req_kwh <= ev.e_max_kwh
        && ev.e_min_kwh <= ev.e_end_min_kwh
        && ev.e_end_min_kwh <= ev.e_max_kwh
        && ev.p_max_kw > 0.0
        && ev.eta_c > 0.0
        && ev.eta_c <= 1.0
        && ev.eta_d > 0.0
        && ev.eta_d <= 1.0
        && ev.t_sustain_h > 0.0
        && ev.t_sustain_h <= 24.0
        && ev.delta_penalty >= 0.0;
    let trip_ok = trip.duration_steps >= 1
        && trip.window_start_step <= trip.original_start_step
        && trip.original_start_step + trip.duration_steps <= trip.window_end_step
        && trip.window_end_step <= grid.step_count
        && trip.travel_energy_kwh >= 0.0
        && trip.travel_energy_kwh <= ev.e_req_kwh - ev.e_min_kwh;
    let prices_ok = prices.buy.len() == grid.step_count
        && prices.sell.len() == grid.step_count
        && prices.fr.len() == grid.step_count
        && prices.fr.iter().all(|&f| f >= 0.0);
    grid_ok && ev_ok && trip_ok && prices_ok
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn validate_iff_invariants(ev in arb_ev(), trip in arb_trip(), fr0 in -0.01..0.05f64) {
        let grid = TimeGrid::default();
        let mut prices = PriceSeries::constant(24, 0.04, 0.0, 0.02);
        prices.fr[0] = fr0;
        let ok = validate(&ev, &trip, &prices, &grid).is_empty();
        prop_assert_eq!(ok, invariants_hold(&ev, &trip, &prices, &grid));
    }

    #[test]
    fn mask_false_run_equals_duration(duration in 1usize..24, start in 0usize..24) {
        let grid = TimeGrid::default();
        let trip = TripSpec {
            duration_steps: duration,
            travel_energy_kwh: 1.0,
            window_start_step: 0,
            window_end_step: 24,
            original_start_step: 0,
        };
        match derive_grid_mask(&grid, &trip, start) {
            Ok(mask) => {
                prop_assert!(start + duration <= 24);
                let away = mask.iter().filter(|&&m| !m).count();
                prop_assert_eq!(away, duration);
                // Contiguity: exactly the planned block is false.
                for (t, &m) in mask.iter().enumerate() {
                    prop_assert_eq!(m, !(start..start + duration).contains(&t));
                }
                // Idempotence: rebuilding gives the same mask.
                let again = derive_grid_mask(&grid, &trip, start).unwrap();
                prop_assert_eq!(mask, again);
            }
            Err(violation) => {
                prop_assert!(start + duration > 24);
                prop_assert_eq!(violation.field.as_str(), "start_step");
            }
        }
    }
}

//! Day-ahead co-optimization of trips and charging for commercial EV fleets
//! with V2G, covering present and projected GB frequency-response markets.
//!
//! The crate is organised around the planning pipeline:
//!
//! * [`types`] — shared domain types and validation.
//! * [`lp`] — the exact solver kernel (bounded simplex + branch and bound).
//! * [`charging`] — the per-EV day model and schedule decoding.
//! * [`trips`] — trip start-time enumeration and selection.
//! * [`fr_prices`] — frequency-response price series, including the
//!   projected Dynamic Containment price pipeline.
//! * [`fleet_synth`] — Gaussian driving-pattern fitting and synthetic fleets.
//! * [`emissions`] — CCGTs and CO₂ avoided by fleet-provided response.
//! * [`config`] — the TOML run configuration shared with the CLI.

pub mod charging;
pub mod config;
pub mod emissions;
pub mod fleet_synth;
pub mod fr_prices;
pub mod lp;
pub mod trips;
pub mod types;

pub use types::{
    derive_grid_mask, validate, EvParams, PriceSeries, ScenarioKind, Schedule, TimeGrid, TripSpec,
    Violation,
};

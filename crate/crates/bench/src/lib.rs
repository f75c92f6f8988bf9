//! Benchmark-only crate; see `benches/day_ahead.rs`.

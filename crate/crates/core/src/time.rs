//! Simulated time.
//!
//! Time is kept as integer ticks so that event ordering never depends on
//! floating point rounding. One simulated time unit (the "second" of all
//! per-second metrics) is [`TICKS_PER_UNIT`] ticks.

pub type Ticks = u64;

pub const TICKS_PER_UNIT: Ticks = 1_000_000;

/// Converts a duration in time units to ticks, rounding to nearest.
pub fn ticks(units: f64) -> Ticks {
    if units <= 0.0 {
        0
    } else {
        (units * TICKS_PER_UNIT as f64).round() as Ticks
    }
}

pub fn units(t: Ticks) -> f64 {
    t as f64 / TICKS_PER_UNIT as f64
}

/// Index of the one-unit bucket containing `t`.
pub fn bucket(t: Ticks) -> u64 {
    t / TICKS_PER_UNIT
}

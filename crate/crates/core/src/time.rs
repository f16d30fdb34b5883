//! Integer millisecond clock helpers. Nothing here reads the wall clock.

/// Epoch milliseconds.
pub type Timestamp = i64;

pub const MINUTE_MS: i64 = 60_000;
pub const HOUR_MS: i64 = 60 * MINUTE_MS;
pub const DAY_MS: i64 = 24 * HOUR_MS;

/// Calendar day index (UTC) of a timestamp.
pub fn day_index(ts: Timestamp) -> i64 {
    ts.div_euclid(DAY_MS)
}

/// Start of the UTC day containing `ts`.
pub fn day_start(ts: Timestamp) -> Timestamp {
    day_index(ts) * DAY_MS
}

/// Elapsed time in fractional days.
pub fn days_between(from: Timestamp, to: Timestamp) -> f64 {
    (to - from) as f64 / DAY_MS as f64
}

pub fn days_to_ms(days: f64) -> i64 {
    (days * DAY_MS as f64).round() as i64
}

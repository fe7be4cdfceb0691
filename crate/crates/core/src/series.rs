//! Timestamp handling and calendar features shared by the CSV readers.

use chrono::{Datelike, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

const FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"];

/// Parses a naive local ISO 8601 timestamp. `line` is 1-based for messages.
pub fn parse_timestamp(s: &str, line: usize) -> Result<NaiveDateTime> {
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("bad timestamp {s:?}"),
        })
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

/// Sampling interval in hours; errors unless strictly increasing and uniform.
/// `first_line` is the file line of `ts[0]`.
pub fn uniform_step_hours(ts: &[NaiveDateTime], first_line: usize) -> Result<f64> {
    if ts.len() < 2 {
        return Ok(1.0);
    }
    let step = ts[1] - ts[0];
    for (i, w) in ts.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d != step || d <= chrono::Duration::zero() {
            return Err(Error::NonUniformTimestamps { line: first_line + i + 1 });
        }
    }
    Ok(step.num_seconds() as f64 / 3600.0)
}

/// Fractional local hour of day in [0, 24).
pub fn hour_of_day(t: &NaiveDateTime) -> f64 {
    t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0
}

/// Names of the disturbance-regressor inputs, in layout order.
pub const FEATURE_NAMES: [&str; 12] = [
    "t_out", "ghi", "wind", "hour_sin", "hour_cos", "mon", "tue", "wed", "thu", "fri", "sat", "sun",
];

/// Weather and calendar features for one instant.
pub fn disturbance_features(t: &NaiveDateTime, t_out: f64, ghi: f64, wind: f64) -> Vec<f64> {
    let phase = 2.0 * std::f64::consts::PI * hour_of_day(t) / 24.0;
    let mut f = vec![t_out, ghi, wind, phase.sin(), phase.cos()];
    let dow = t.weekday().num_days_from_monday() as usize;
    f.extend((0..7).map(|d| if d == dow { 1.0 } else { 0.0 }));
    f
}

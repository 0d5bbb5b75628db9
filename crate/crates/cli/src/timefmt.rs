//! ISO-8601 timestamps as seconds since the Unix epoch.

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};

use crate::error::{CliError, Result};

/// Parse an RFC 3339 timestamp, or a naive `YYYY-MM-DDTHH:MM:SS[.f]` taken as UTC.
pub fn parse(s: &str) -> Result<f64> {
    let s = s.trim();
    let dt = DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").map(|n| n.and_utc()))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f").map(|n| n.and_utc()))
        .map_err(|_| CliError::Validation(format!("`{s}` is not an ISO-8601 timestamp")))?;
    Ok(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9)
}

/// UTC timestamp with whole seconds, or milliseconds when needed.
pub fn format(t: f64) -> String {
    let secs = t.floor();
    let nanos = ((t - secs) * 1e9).round() as u32;
    let (secs, nanos) = if nanos >= 1_000_000_000 { (secs + 1.0, 0) } else { (secs, nanos) };
    let dt = DateTime::<Utc>::from_timestamp(secs as i64, nanos).unwrap_or_default();
    if nanos == 0 {
        dt.to_rfc3339_opts(SecondsFormat::Secs, true)
    } else {
        dt.to_rfc3339_opts(SecondsFormat::Millis, true)
    }
}

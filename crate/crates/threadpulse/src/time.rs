//! UTC timestamps with second precision.

use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

/// Seconds since the Unix epoch, UTC. Sub-second precision is truncated on
/// parse; all event data handled by this crate is second-granular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn as_secs(&self) -> i64 {
        self.0
    }

    /// Seconds from `earlier` to `self` as a float duration.
    pub fn seconds_since(&self, earlier: Timestamp) -> f64 {
        (self.0 - earlier.0) as f64
    }

    /// Parse an ISO 8601 UTC timestamp. Accepts RFC 3339 (`2026-01-28T00:00:00Z`,
    /// offset forms) and the space-separated variant (`2026-01-28 00:00:00`,
    /// optionally suffixed `Z`), which some archive exports use.
    pub fn parse(s: &str) -> Result<Timestamp, TimeParseError> {
        let s = s.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Ok(Timestamp(dt.timestamp()));
        }
        let naive = s.strip_suffix('Z').unwrap_or(s);
        for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(naive, fmt) {
                return Ok(Timestamp(dt.and_utc().timestamp()));
            }
        }
        Err(TimeParseError(s.to_string()))
    }

    /// Parse a snapshot identifier: a full timestamp or a bare `YYYY-MM-DD` date.
    pub fn parse_date_or_time(s: &str) -> Result<Timestamp, TimeParseError> {
        if let Ok(ts) = Self::parse(s) {
            return Ok(ts);
        }
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .map(|d| Timestamp(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp()))
            .map_err(|_| TimeParseError(s.to_string()))
    }

    /// Hour of day in UTC, 0-23.
    pub fn hour_utc(&self) -> u32 {
        DateTime::<Utc>::from_timestamp(self.0, 0)
            .map(|dt| {
                use chrono::Timelike;
                dt.hour()
            })
            .unwrap_or(0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%SZ")),
            None => write!(f, "@{}", self.0),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("unparseable timestamp: {0:?}")]
pub struct TimeParseError(pub String);

pub const SECS_PER_HOUR: f64 = 3600.0;

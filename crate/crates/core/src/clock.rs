use std::fmt;

use chrono::{DateTime, NaiveDate, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

/// UTC instant with second precision, serialized as RFC 3339 (`...Z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Timestamp(Utc.timestamp_opt(dt.timestamp(), 0).unwrap())
    }

    pub fn from_unix(secs: i64) -> Option<Self> {
        Utc.timestamp_opt(secs, 0).single().map(Timestamp)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let dt = DateTime::parse_from_rfc3339(text).map_err(|e| format!("invalid timestamp `{text}`: {e}"))?;
        let ts = Timestamp::from_datetime(dt.with_timezone(&Utc));
        if ts.to_string() != text {
            return Err(format!("timestamp `{text}` is not in canonical form (expected `{ts}`)"));
        }
        Ok(ts)
    }

    pub fn unix(&self) -> i64 {
        self.0.timestamp()
    }

    pub fn date(&self) -> NaiveDate {
        self.0.date_naive()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_rfc3339_opts(SecondsFormat::Secs, true))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Timestamp::parse(&raw).map_err(serde::de::Error::custom)
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Timestamp::from_datetime(Utc::now())
    }
}

/// Always returns the same instant; used for reproducible offline runs.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub Timestamp);

impl Clock for FixedClock {
    fn now(&self) -> Timestamp {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_precision_rfc3339() {
        let ts = Timestamp::parse("2025-11-25T10:00:00Z").unwrap();
        assert_eq!(ts.to_string(), "2025-11-25T10:00:00Z");
        assert_eq!(serde_json::to_string(&ts).unwrap(), "\"2025-11-25T10:00:00Z\"");
        assert!(Timestamp::parse("2025-11-25T10:00:00.5Z").is_err());
        assert!(Timestamp::parse("2025-11-25T12:00:00+02:00").is_err());
        assert!(Timestamp::parse("yesterday").is_err());
    }
}

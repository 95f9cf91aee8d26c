//! Fourteen digit archival timestamps (`YYYYMMDDHHMMSS`, GMT).

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const FORMAT: &str = "%Y%m%d%H%M%S";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid 14-digit timestamp `{0}`")]
pub struct TimestampError(pub String);

/// A second-granularity GMT datetime whose string form sorts chronologically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Timestamp14(String);

impl Timestamp14 {
    pub fn parse(s: &str) -> Result<Self, TimestampError> {
        if s.len() != 14 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(TimestampError(s.to_string()));
        }
        NaiveDateTime::parse_from_str(s, FORMAT).map_err(|_| TimestampError(s.to_string()))?;
        Ok(Self(s.to_string()))
    }

    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Self(dt.format(FORMAT).to_string())
    }

    pub fn from_unix(secs: i64) -> Option<Self> {
        let dt = Utc.timestamp_opt(secs, 0).single()?;
        // Four-digit years only.
        (1000..=9999)
            .contains(&chrono::Datelike::year(&dt))
            .then(|| Self::from_datetime(dt))
    }

    pub fn now() -> Self {
        Self::from_datetime(Utc::now())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_datetime(&self) -> DateTime<Utc> {
        let naive = NaiveDateTime::parse_from_str(&self.0, FORMAT)
            .expect("Timestamp14 holds a validated datetime");
        Utc.from_utc_datetime(&naive)
    }

    pub fn unix(&self) -> i64 {
        self.to_datetime().timestamp()
    }

    /// Seconds from `self` to `other` (negative when `other` is earlier).
    pub fn seconds_until(&self, other: &Timestamp14) -> i64 {
        other.unix() - self.unix()
    }

    pub fn plus_seconds(&self, secs: i64) -> Self {
        Self::from_datetime(self.to_datetime() + chrono::Duration::seconds(secs))
    }

    /// `WARC-Date` form, e.g. `2021-06-01T12:00:00Z`.
    pub fn to_w3c(&self) -> String {
        self.to_datetime().format("%Y-%m-%dT%H:%M:%SZ").to_string()
    }

    pub fn from_w3c(s: &str) -> Result<Self, TimestampError> {
        DateTime::parse_from_rfc3339(s)
            .map(|dt| Self::from_datetime(dt.with_timezone(&Utc)))
            .map_err(|_| TimestampError(s.to_string()))
    }

    /// HTTP date form used by `Memento-Datetime`, e.g. `Tue, 01 Jun 2021 12:00:00 GMT`.
    pub fn to_rfc1123(&self) -> String {
        self.to_datetime()
            .format("%a, %d %b %Y %H:%M:%S GMT")
            .to_string()
    }

    pub fn from_rfc1123(s: &str) -> Result<Self, TimestampError> {
        DateTime::parse_from_rfc2822(s)
            .map(|dt| Self::from_datetime(dt.with_timezone(&Utc)))
            .map_err(|_| TimestampError(s.to_string()))
    }
}

impl fmt::Display for Timestamp14 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Timestamp14 {
    type Err = TimestampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for Timestamp14 {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Timestamp14 {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_calendar_values() {
        assert!(Timestamp14::parse("20210230120000").is_err());
        assert!(Timestamp14::parse("2021060112000").is_err());
        assert!(Timestamp14::parse("20210601126000").is_err());
        assert!(Timestamp14::parse("2021060112000a").is_err());
        assert!(Timestamp14::parse("20210601120000").is_ok());
    }

    #[test]
    fn date_forms() {
        let ts = Timestamp14::parse("20210601120304").unwrap();
        assert_eq!(ts.to_w3c(), "2021-06-01T12:03:04Z");
        assert_eq!(ts.to_rfc1123(), "Tue, 01 Jun 2021 12:03:04 GMT");
        assert_eq!(Timestamp14::from_rfc1123(&ts.to_rfc1123()).unwrap(), ts);
        assert_eq!(Timestamp14::from_w3c(&ts.to_w3c()).unwrap(), ts);
    }

    proptest! {
        #[test]
        fn ordering_is_chronological(a in 0i64..253_402_300_799, b in 0i64..253_402_300_799) {
            let (ta, tb) = (Timestamp14::from_unix(a).unwrap(), Timestamp14::from_unix(b).unwrap());
            prop_assert_eq!(ta.cmp(&tb), a.cmp(&b));
            prop_assert_eq!(ta.unix(), a);
        }
    }
}

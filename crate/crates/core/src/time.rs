//! Timestamp conventions.
//!
//! Timestamps are UTC with second resolution and are carried as
//! [`NaiveDateTime`]. The canonical text form is `yyyy-MM-dd HH:MM:SS`;
//! filenames use the filesystem-safe `yyyy-MM-ddTHH-MM-SS`.

use chrono::{Duration, NaiveDateTime, Timelike};

pub type Timestamp = NaiveDateTime;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
pub const FILENAME_FORMAT: &str = "%Y-%m-%dT%H-%M-%S";

/// Length of a formatted timestamp in bytes.
pub const TIMESTAMP_LEN: usize = 19;

pub fn format_ts(ts: Timestamp) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_ts(s: &str) -> Option<Timestamp> {
    let t = NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT).ok()?;
    (t.nanosecond() == 0).then_some(t)
}

pub fn filename_stem(ts: Timestamp) -> String {
    ts.format(FILENAME_FORMAT).to_string()
}

pub fn minutes(m: i64) -> Duration {
    Duration::minutes(m)
}

/// Whole minutes since midnight of the timestamp's own day.
pub fn minute_of_day(ts: Timestamp) -> u32 {
    ts.hour() * 60 + ts.minute()
}

/// Elapsed minutes from `a` to `b`, possibly fractional.
pub fn minutes_between(a: Timestamp, b: Timestamp) -> f64 {
    (b - a).num_seconds() as f64 / 60.0
}

/// `serde` adapter writing timestamps in the canonical text form.
pub mod serde_ts {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_ts(*ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let s = String::deserialize(d)?;
        parse_ts(&s).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn formats_both_forms() {
        let ts = NaiveDate::from_ymd_opt(2023, 10, 18).unwrap().and_hms_opt(14, 5, 0).unwrap();
        assert_eq!(format_ts(ts), "2023-10-18 14:05:00");
        assert_eq!(filename_stem(ts), "2023-10-18T14-05-00");
        assert_eq!(parse_ts("2023-10-18 14:05:00"), Some(ts));
        assert_eq!(parse_ts("2023-10-18T14:05:00"), None);
        assert_eq!(minute_of_day(ts), 14 * 60 + 5);
    }
}

//! Daily ambient maxima and minima (`date,tmax,tmin`).

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientDay {
    pub date: NaiveDate,
    pub t_max: f64,
    pub t_min: f64,
}

impl AmbientDay {
    pub fn new(date: NaiveDate, t_max: f64, t_min: f64) -> Option<Self> {
        (t_max.is_finite() && t_min.is_finite() && t_max >= t_min).then_some(AmbientDay { date, t_max, t_min })
    }

    pub fn mean(&self) -> f64 {
        (self.t_max + self.t_min) / 2.0
    }

    pub fn range(&self) -> f64 {
        self.t_max - self.t_min
    }
}

/// Accepts `1-Jan-2022` and `2022-01-01`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%d-%b-%Y").or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d")).ok()
}

/// Parses the CSV text. Lines starting with `#` and a `date,...` header are
/// skipped. Days are returned date-ascending; a hole in the calendar is
/// logged, not rejected.
pub fn parse_aemet(text: &str) -> Result<Vec<AmbientDay>, SynthError> {
    let mut days = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.to_ascii_lowercase().starts_with("date") {
            continue;
        }
        let bad = |why: &str| SynthError::MalformedRow { line: i + 1, msg: format!("{why}: `{line}`") };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad("expected date,tmax,tmin"));
        }
        let date = parse_date(fields[0]).ok_or_else(|| bad("bad date"))?;
        let t_max: f64 = fields[1].parse().map_err(|_| bad("bad tmax"))?;
        let t_min: f64 = fields[2].parse().map_err(|_| bad("bad tmin"))?;
        days.push(AmbientDay::new(date, t_max, t_min).ok_or_else(|| bad("tmin above tmax"))?);
    }
    days.sort_by_key(|d| d.date);
    for w in days.windows(2) {
        if w[0].date == w[1].date {
            return Err(SynthError::DuplicateDate(w[0].date));
        }
        if w[1].date != w[0].date.succ_opt().expect("date in range") {
            log::warn!("ambient data skips from {} to {}", w[0].date, w[1].date);
        }
    }
    Ok(days)
}

pub fn load_aemet(path: &Path) -> Result<Vec<AmbientDay>, SynthError> {
    let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
    parse_aemet(&text)
}

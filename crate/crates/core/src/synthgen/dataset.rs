//! On-disk forms: model-day CSVs, generated datasets, schedules and
//! ground-truth logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::extraction::TemperatureSeries;
use crate::roi::Roi;
use crate::scalar::Scalar;
use crate::time::{format_ts, minutes_between, parse_ts, Timestamp};

use super::heater::GroundTruthEntry;
use super::year::{AnomalySpec, SyntheticYear};
use super::SynthError;

pub const SERIES_DIR: &str = "series";
pub const FRAMES_DIR: &str = "frames";
pub const MASK_FILE: &str = "mask.pgm";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const SCHEDULE_HEADER: &str = "date,roi,start,duration_min,q_w";
const GROUND_TRUTH_HEADER: &str = "roi,start,end,peak_deviation_c,q_w";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |e| SynthError::Io(format!("{}: {e}", path.display()))
}

fn malformed(line: usize, msg: impl Into<String>) -> SynthError {
    SynthError::MalformedRow { line, msg: msg.into() }
}

/// Data lines of a CSV with an optional header, skipping `#` comments.
fn data_lines<'a>(text: &'a str, header_prefix: &'a str) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(move |(_, l)| !l.is_empty() && !l.starts_with('#') && !l.starts_with(header_prefix))
}

/// Parses a wide model-day file: `timestamp,<roi>,<roi>,...`.
pub fn parse_model_day<T: Scalar>(text: &str, camera: &str) -> Result<BTreeMap<Roi, TemperatureSeries<T>>, SynthError> {
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| malformed(1, "empty model-day file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"timestamp") || cols.len() < 2 {
        return Err(malformed(1, "expected header `timestamp,<roi>,...`"));
    }
    let rois = cols[1..]
        .iter()
        .map(|c| c.parse::<Roi>().map_err(|e| malformed(1, e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<(Timestamp, Vec<T>)> = Vec::new();
    for (line, l) in data_lines(text, "timestamp") {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != cols.len() {
            return Err(malformed(line, format!("expected {} fields", cols.len())));
        }
        let t = parse_ts(f[0]).ok_or_else(|| malformed(line, "bad timestamp"))?;
        let v = f[1..]
            .iter()
            .map(|x| x.parse::<T>().map_err(|_| malformed(line, format!("bad value `{x}`"))))
            .collect::<Result<Vec<T>, _>>()?;
        rows.push((t, v));
    }
    if rows.len() < 2 {
        return Err(SynthError::IncompleteDay("fewer than two samples".into()));
    }
    let cadence = minutes_between(rows[0].0, rows[1].0);
    if !(cadence >= 1.0 && cadence.fract() == 0.0) {
        return Err(SynthError::IncompleteDay(format!("cadence {cadence} min")));
    }
    let mut out = BTreeMap::new();
    for (k, &roi) in rois.iter().enumerate() {
        let samples = rows.iter().map(|(t, v)| (*t, v[k])).collect();
        let s = TemperatureSeries::from_samples(camera, roi, cadence as u32, samples)
            .map_err(|e| SynthError::IncompleteDay(e.to_string()))?;
        out.insert(roi, s);
    }
    Ok(out)
}

/// `timestamp,temp_c` rows.
pub fn write_series_csv<T: Scalar>(path: &Path, series: &TemperatureSeries<T>) -> Result<(), SynthError> {
    let mut s = String::with_capacity(series.len() * 32 + 20);
    s.push_str("timestamp,temp_c\n");
    for &(t, v) in series.samples() {
        let _ = writeln!(s, "{},{}", format_ts(t), v);
    }
    fs::write(path, s).map_err(io(path))
}

pub fn read_series_csv<T: Scalar>(path: &Path, camera: &str, roi: Roi, cadence: u32) -> Result<TemperatureSeries<T>, SynthError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let mut out = TemperatureSeries::new(camera, roi, cadence);
    for (line, l) in data_lines(&text, "timestamp") {
        let (t, v) = l.split_once(',').ok_or_else(|| malformed(line, "expected timestamp,temp_c"))?;
        let t = parse_ts(t).ok_or_else(|| malformed(line, "bad timestamp"))?;
        let v: T = v.trim().parse().map_err(|_| malformed(line, "bad temperature"))?;
        out.push(t, v).map_err(|e| malformed(line, e.to_string()))?;
    }
    Ok(out)
}

pub fn format_schedule(schedule: &[AnomalySpec]) -> String {
    let mut s = format!("{SCHEDULE_HEADER}\n");
    for a in schedule {
        let _ = writeln!(
            s,
            "{},{},{:02}:{:02},{},{}",
            a.date.format("%Y-%m-%d"),
            a.roi,
            a.start / 60,
            a.start % 60,
            a.duration,
            a.q
        );
    }
    s
}

pub fn parse_schedule(text: &str) -> Result<Vec<AnomalySpec>, SynthError> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text, "date") {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(malformed(line, "expected date,roi,start,duration_min,q_w"));
        }
        let date = NaiveDate::parse_from_str(f[0], "%Y-%m-%d").map_err(|_| malformed(line, "bad date"))?;
        let roi: Roi = f[1].parse().map_err(|e: crate::roi::UnknownRoiLabel| malformed(line, e.to_string()))?;
        let (h, m) = f[2].split_once(':').ok_or_else(|| malformed(line, "start must be HH:MM"))?;
        let (h, m): (u32, u32) = match (h.parse(), m.parse()) {
            (Ok(h), Ok(m)) if h < 24 && m < 60 => (h, m),
            _ => return Err(malformed(line, "start must be HH:MM")),
        };
        let duration = f[3].parse().map_err(|_| malformed(line, "bad duration"))?;
        let q = f[4].parse().map_err(|_| malformed(line, "bad power"))?;
        out.push(AnomalySpec { date, roi, start: h * 60 + m, duration, q });
    }
    Ok(out)
}

pub fn format_ground_truth(entries: &[GroundTruthEntry]) -> String {
    let mut s = format!("{GROUND_TRUTH_HEADER}\n");
    for g in entries {
        let _ = writeln!(s, "{},{},{},{},{}", g.roi, format_ts(g.start), format_ts(g.end), g.peak_deviation, g.q);
    }
    s
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruthEntry>, SynthError> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text, "roi") {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(malformed(line, "expected roi,start,end,peak_deviation_c,q_w"));
        }
        let roi: Roi = f[0].parse().map_err(|e: crate::roi::UnknownRoiLabel| malformed(line, e.to_string()))?;
        let start = parse_ts(f[1]).ok_or_else(|| malformed(line, "bad start"))?;
        let end = parse_ts(f[2]).ok_or_else(|| malformed(line, "bad end"))?;
        if end < start {
            return Err(malformed(line, "end before start"));
        }
        let peak_deviation = f[3].parse().map_err(|_| malformed(line, "bad peak"))?;
        let q = f[4].parse().map_err(|_| malformed(line, "bad power"))?;
        out.push(GroundTruthEntry { roi, start, end, peak_deviation, q });
    }
    Ok(out)
}

/// Provenance of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub camera: String,
    pub seed: u64,
    pub config_digest: String,
    pub cadence: u32,
    pub start: NaiveDate,
    pub days: u32,
    pub anomalies: usize,
    pub frames: bool,
    pub rois: Vec<Roi>,
}

/// A dataset read back from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub series: BTreeMap<Roi, TemperatureSeries<f64>>,
    pub schedule: Vec<AnomalySpec>,
    pub ground_truth: Vec<GroundTruthEntry>,
}

impl Dataset {
    pub fn frames_dir(&self) -> Option<PathBuf> {
        let d = self.root.join(FRAMES_DIR);
        d.is_dir().then_some(d)
    }

    pub fn mask_path(&self) -> Option<PathBuf> {
        let p = self.root.join(MASK_FILE);
        p.is_file().then_some(p)
    }
}

/// Writes series, schedule, ground truth and manifest under `dir`.
pub fn write_dataset<T: Scalar>(dir: &Path, year: &SyntheticYear<T>, manifest: &Manifest) -> Result<(), SynthError> {
    let series_dir = dir.join(SERIES_DIR);
    fs::create_dir_all(&series_dir).map_err(io(&series_dir))?;
    for (roi, s) in &year.series {
        write_series_csv(&series_dir.join(format!("{roi}.csv")), s)?;
    }
    let p = dir.join(SCHEDULE_FILE);
    fs::write(&p, format_schedule(&year.schedule)).map_err(io(&p))?;
    let p = dir.join(GROUND_TRUTH_FILE);
    fs::write(&p, format_ground_truth(&year.ground_truth)).map_err(io(&p))?;
    let p = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest).map_err(|e| SynthError::Io(e.to_string()))?;
    fs::write(&p, json + "\n").map_err(io(&p))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, SynthError> {
    let p = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&p).map_err(io(&p))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| SynthError::Io(format!("{}: {e}", p.display())))?;
    let mut series = BTreeMap::new();
    for &roi in &manifest.rois {
        let path = dir.join(SERIES_DIR).join(format!("{roi}.csv"));
        series.insert(roi, read_series_csv(&path, &manifest.camera, roi, manifest.cadence)?);
    }
    let p = dir.join(SCHEDULE_FILE);
    let schedule = parse_schedule(&fs::read_to_string(&p).map_err(io(&p))?)?;
    let p = dir.join(GROUND_TRUTH_FILE);
    let ground_truth = parse_ground_truth(&fs::read_to_string(&p).map_err(io(&p))?)?;
    Ok(Dataset { root: dir.to_path_buf(), manifest, series, schedule, ground_truth })
}

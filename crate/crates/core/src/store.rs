//! Append-only, plain-text persistence per camera.
//!
//! ```text
//! <root>/store.meta              cadence=<minutes>
//! <root>/<camera>/<roi>.csv      timestamp,temp_c
//! <root>/<camera>/status.log     one status table per line
//! <root>/<camera>/alarms.log     one alarm per line, never pruned
//! <root>/<camera>/models.log     one model snapshot per line
//! <root>/<camera>/region_sizes.csv
//! ```
//!
//! Every append writes whole lines with a single `write` call, so a reader
//! or a reopened store sees a prefix of the appended rows. A trailing line
//! without its newline (interrupted write) is cut off on open.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::alarmeval::{AlarmRecord, ModelSnapshot, StatusTable};
use crate::extraction::{TemperatureSample, TemperatureSeries};
use crate::forecasting::{ForecastError, HistorySource};
use crate::imaging::RegionSizeSample;
use crate::roi::Roi;
use crate::time::{format_ts, minutes, parse_ts, Timestamp, TIMESTAMP_LEN};

const SERIES_HEADER: &str = "timestamp,temp_c";
const REGION_HEADER: &str = "timestamp,n_regions,sizes";
const META_FILE: &str = "store.meta";
const STATUS_FILE: &str = "status.log";
const ALARMS_FILE: &str = "alarms.log";
const MODELS_FILE: &str = "models.log";
const REGIONS_FILE: &str = "region_sizes.csv";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{camera}/{what}: timestamp {new} does not follow {last}")]
    NonMonotonicTimestamp { camera: String, what: &'static str, last: String, new: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Corrupt { path: PathBuf, line: usize, msg: String },
    #[error("invalid camera id `{0}`")]
    InvalidCamera(String),
    #[error("retention must be positive")]
    InvalidRetention,
    #[error("store at {} has cadence {found}, requested {requested}", root.display())]
    CadenceMismatch { root: PathBuf, found: u32, requested: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// How many status tables to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    /// The newest `n` tables.
    Count(usize),
    /// Tables no older than `now - minutes`.
    Minutes(u64),
}

#[derive(Default)]
struct CameraData {
    series: BTreeMap<Roi, Vec<(Timestamp, f64)>>,
    last_sample: Option<Timestamp>,
    last_status: Option<Timestamp>,
    last_alarm: Option<(Timestamp, Roi)>,
    last_model: Option<(Timestamp, Roi)>,
    last_regions: Option<Timestamp>,
    handles: HashMap<PathBuf, File>,
}

/// Handle on a store directory with an in-memory copy of every series.
pub struct SeriesStore {
    root: PathBuf,
    cadence: u32,
    sync: bool,
    cameras: HashMap<String, CameraData>,
}

impl std::fmt::Debug for SeriesStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeriesStore").field("root", &self.root).field("cadence", &self.cadence).finish()
    }
}

impl SeriesStore {
    /// Opens or creates a store with the given cadence (minutes).
    pub fn open(root: impl Into<PathBuf>, cadence: u32) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let meta = root.join(META_FILE);
        match read_meta(&meta)? {
            Some(found) if found != cadence => {
                return Err(StoreError::CadenceMismatch { root, found, requested: cadence })
            }
            Some(_) => {}
            None => fs::write(&meta, format!("cadence={cadence}\n")).map_err(io_err(&meta))?,
        }
        Ok(SeriesStore { root, cadence, sync: false, cameras: HashMap::new() })
    }

    /// Opens an existing store, taking the cadence from its metadata.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let meta = root.join(META_FILE);
        let cadence = read_meta(&meta)?.ok_or_else(|| StoreError::Io {
            path: meta.clone(),
            source: io::Error::new(io::ErrorKind::NotFound, "not a store (metadata missing)"),
        })?;
        Ok(SeriesStore { root, cadence, sync: false, cameras: HashMap::new() })
    }

    /// Also `fsync` every append (default: flushed to the OS only).
    pub fn set_sync(&mut self, sync: bool) {
        self.sync = sync;
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cadence(&self) -> u32 {
        self.cadence
    }

    pub fn camera_dir(&self, camera: &str) -> PathBuf {
        self.root.join(camera)
    }

    /// Camera directories present on disk, sorted.
    pub fn cameras(&self) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            if entry.path().is_dir() {
                if let Some(name) = entry.file_name().to_str() {
                    out.push(name.to_string());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    fn camera(&mut self, camera: &str) -> Result<&mut CameraData, StoreError> {
        if !self.cameras.contains_key(camera) {
            let data = load_camera(&self.root, camera)?;
            self.cameras.insert(camera.to_string(), data);
        }
        Ok(self.cameras.get_mut(camera).expect("inserted"))
    }

    /// Appends one row per ROI of the sample.
    pub fn append_sample(&mut self, camera: &str, sample: &TemperatureSample<f64>) -> Result<(), StoreError> {
        let dir = self.camera_dir(camera);
        let sync = self.sync;
        let data = self.camera(camera)?;
        if let Some(last) = data.last_sample {
            if sample.timestamp <= last {
                return Err(non_monotonic(camera, "samples", last, sample.timestamp));
            }
        }
        let ts = format_ts(sample.timestamp);
        for (&roi, &v) in &sample.temps {
            let path = dir.join(format!("{}.csv", roi.label()));
            let header = (!path.exists()).then_some(SERIES_HEADER);
            append(&mut data.handles, &path, header, &format!("{ts},{v}\n"), sync)?;
            data.series.entry(roi).or_default().push((sample.timestamp, v));
        }
        data.last_sample = Some(sample.timestamp);
        Ok(())
    }

    pub fn append_status(&mut self, table: &StatusTable) -> Result<(), StoreError> {
        let path = self.camera_dir(&table.camera).join(STATUS_FILE);
        let sync = self.sync;
        let data = self.camera(&table.camera)?;
        if let Some(last) = data.last_status {
            if table.timestamp <= last {
                return Err(non_monotonic(&table.camera, "status", last, table.timestamp));
            }
        }
        let line = table.to_line().map_err(|e| corrupt(&path, 0, e))?;
        append(&mut data.handles, &path, None, &(line + "\n"), sync)?;
        data.last_status = Some(table.timestamp);
        Ok(())
    }

    /// Alarms are ordered by `(timestamp, roi)`.
    pub fn append_alarm(&mut self, rec: &AlarmRecord) -> Result<(), StoreError> {
        let path = self.camera_dir(&rec.camera).join(ALARMS_FILE);
        let sync = self.sync;
        let data = self.camera(&rec.camera)?;
        let key = (rec.timestamp, rec.roi);
        if let Some(last) = data.last_alarm {
            if key <= last {
                return Err(non_monotonic(&rec.camera, "alarms", last.0, rec.timestamp));
            }
        }
        let line = rec.to_line().map_err(|e| corrupt(&path, 0, e))?;
        append(&mut data.handles, &path, None, &(line + "\n"), sync)?;
        data.last_alarm = Some(key);
        Ok(())
    }

    pub fn append_model(&mut self, snap: &ModelSnapshot) -> Result<(), StoreError> {
        let path = self.camera_dir(&snap.camera).join(MODELS_FILE);
        let sync = self.sync;
        let data = self.camera(&snap.camera)?;
        let key = (snap.trained_at, snap.roi);
        if let Some(last) = data.last_model {
            if key <= last {
                return Err(non_monotonic(&snap.camera, "models", last.0, snap.trained_at));
            }
        }
        let line = serde_json::to_string(snap).map_err(|e| corrupt(&path, 0, e))?;
        append(&mut data.handles, &path, None, &(line + "\n"), sync)?;
        data.last_model = Some(key);
        Ok(())
    }

    /// One row per frame: `timestamp,n,class:region:pixels;...`.
    pub fn append_region_sizes(&mut self, camera: &str, rec: &RegionSizeSample) -> Result<(), StoreError> {
        let path = self.camera_dir(camera).join(REGIONS_FILE);
        let sync = self.sync;
        let data = self.camera(camera)?;
        if let Some(last) = data.last_regions {
            if rec.timestamp <= last {
                return Err(non_monotonic(camera, "region sizes", last, rec.timestamp));
            }
        }
        let sizes: Vec<String> = rec.sizes.iter().map(|(c, r, n)| format!("{c}:{r}:{n}")).collect();
        let line = format!("{},{},{}\n", format_ts(rec.timestamp), rec.sizes.len(), sizes.join(";"));
        let header = (!path.exists()).then_some(REGION_HEADER);
        append(&mut data.handles, &path, header, &line, sync)?;
        data.last_regions = Some(rec.timestamp);
        Ok(())
    }

    /// Samples of `(camera, roi)` with `t0 <= t < t1`.
    pub fn load_history(
        &mut self,
        camera: &str,
        roi: Roi,
        t0: Timestamp,
        t1: Timestamp,
    ) -> Result<TemperatureSeries<f64>, StoreError> {
        let cadence = self.cadence;
        self.camera(camera)?;
        Ok(self.cached_history(camera, roi, t0, t1, cadence))
    }

    fn cached_history(&self, camera: &str, roi: Roi, t0: Timestamp, t1: Timestamp, cadence: u32) -> TemperatureSeries<f64> {
        let mut out = TemperatureSeries::new(camera, roi, cadence);
        if let Some(rows) = self.cameras.get(camera).and_then(|d| d.series.get(&roi)) {
            let a = rows.partition_point(|r| r.0 < t0);
            let b = rows.partition_point(|r| r.0 < t1).max(a);
            for &(t, v) in &rows[a..b] {
                out.push(t, v).expect("stored rows are increasing");
            }
        }
        out
    }

    /// Whole series of one ROI.
    pub fn series(&mut self, camera: &str, roi: Roi) -> Result<&[(Timestamp, f64)], StoreError> {
        let data = self.camera(camera)?;
        Ok(data.series.get(&roi).map(Vec::as_slice).unwrap_or(&[]))
    }

    pub fn last_sample(&mut self, camera: &str) -> Result<Option<Timestamp>, StoreError> {
        Ok(self.camera(camera)?.last_sample)
    }

    /// Loads a camera into memory so [`SeriesStore::history_source`] can
    /// serve it.
    pub fn preload(&mut self, camera: &str) -> Result<(), StoreError> {
        self.camera(camera).map(|_| ())
    }

    /// Read-only history view of one preloaded camera.
    pub fn history_source<'a>(&'a self, camera: &'a str) -> CameraHistory<'a> {
        CameraHistory { store: self, camera }
    }

    pub fn status_tables(&self, camera: &str) -> Result<Vec<StatusTable>, StoreError> {
        read_json_lines(&self.camera_dir(camera).join(STATUS_FILE), |l| StatusTable::from_line(l))
    }

    pub fn alarms(&self, camera: &str) -> Result<Vec<AlarmRecord>, StoreError> {
        read_json_lines(&self.camera_dir(camera).join(ALARMS_FILE), |l| AlarmRecord::from_line(l))
    }

    pub fn models(&self, camera: &str) -> Result<Vec<ModelSnapshot>, StoreError> {
        read_json_lines(&self.camera_dir(camera).join(MODELS_FILE), |l| serde_json::from_str(l))
    }

    pub fn region_sizes(&self, camera: &str) -> Result<Vec<RegionSizeSample>, StoreError> {
        let path = self.camera_dir(camera).join(REGIONS_FILE);
        let mut out = Vec::new();
        for (i, line) in read_lines(&path)?.iter().enumerate().skip(1) {
            out.push(parse_region_line(line).ok_or_else(|| corrupt(&path, i + 1, "bad region row"))?);
        }
        Ok(out)
    }

    /// Rewrites the status log keeping only tables inside `retention`.
    /// Returns the number removed.
    pub fn prune_status(&mut self, camera: &str, retention: Retention, now: Timestamp) -> Result<usize, StoreError> {
        match retention {
            Retention::Count(0) | Retention::Minutes(0) => return Err(StoreError::InvalidRetention),
            _ => {}
        }
        let path = self.camera_dir(camera).join(STATUS_FILE);
        let lines = read_lines(&path)?;
        let keep_from = match retention {
            Retention::Count(n) => lines.len().saturating_sub(n),
            Retention::Minutes(m) => {
                let cutoff = now - minutes(m as i64);
                let mut first = lines.len();
                for (i, line) in lines.iter().enumerate() {
                    let t = status_timestamp(line).ok_or_else(|| corrupt(&path, i + 1, "missing timestamp"))?;
                    if t >= cutoff {
                        first = i;
                        break;
                    }
                }
                first
            }
        };
        if keep_from == 0 {
            return Ok(0);
        }
        let data = self.camera(camera)?;
        data.handles.remove(&path);
        let tmp = path.with_extension("log.tmp");
        let mut body = String::new();
        for l in &lines[keep_from..] {
            body.push_str(l);
            body.push('\n');
        }
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(keep_from)
    }
}

/// [`HistorySource`] over one camera of a store.
pub struct CameraHistory<'a> {
    store: &'a SeriesStore,
    camera: &'a str,
}

impl HistorySource<f64> for CameraHistory<'_> {
    fn history(&self, roi: Roi, t0: Timestamp, t1: Timestamp) -> Result<TemperatureSeries<f64>, ForecastError> {
        if !self.store.cameras.contains_key(self.camera) {
            return Err(ForecastError::History(format!("camera {} not loaded", self.camera)));
        }
        Ok(self.store.cached_history(self.camera, roi, t0, t1, self.store.cadence))
    }
}

fn non_monotonic(camera: &str, what: &'static str, last: Timestamp, new: Timestamp) -> StoreError {
    StoreError::NonMonotonicTimestamp { camera: camera.to_string(), what, last: format_ts(last), new: format_ts(new) }
}

fn corrupt(path: &Path, line: usize, msg: impl ToString) -> StoreError {
    StoreError::Corrupt { path: path.to_path_buf(), line, msg: msg.to_string() }
}

fn valid_camera(camera: &str) -> bool {
    !camera.is_empty()
        && camera != "."
        && camera != ".."
        && camera.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn read_meta(path: &Path) -> Result<Option<u32>, StoreError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let value = text
        .lines()
        .find_map(|l| l.strip_prefix("cadence="))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| corrupt(path, 1, "expected `cadence=<minutes>`"))?;
    Ok(Some(value))
}

fn append(
    handles: &mut HashMap<PathBuf, File>,
    path: &Path,
    header: Option<&str>,
    text: &str,
    sync: bool,
) -> Result<(), StoreError> {
    if !handles.contains_key(path) {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        handles.insert(path.to_path_buf(), f);
    }
    let f = handles.get_mut(path).expect("inserted");
    let buf = match header {
        Some(h) => format!("{h}\n{text}"),
        None => text.to_string(),
    };
    f.write_all(buf.as_bytes()).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))?;
    if sync {
        f.sync_data().map_err(io_err(path))?;
    }
    Ok(())
}

/// Complete lines of a file, cutting off an unterminated tail on disk.
fn read_lines(path: &Path) -> Result<Vec<String>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = match text.rfind('\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < text.len() {
        log::warn!("{}: dropping unterminated last line", path.display());
        let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        f.set_len(complete as u64).map_err(io_err(path))?;
    }
    Ok(text[..complete].lines().map(str::to_string).collect())
}

fn read_json_lines<R, E: ToString>(path: &Path, parse: impl Fn(&str) -> Result<R, E>) -> Result<Vec<R>, StoreError> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| parse(l).map_err(|e| corrupt(path, i + 1, e)))
        .collect()
}

fn status_timestamp(line: &str) -> Option<Timestamp> {
    let i = line.find("\"timestamp\":\"")? + 13;
    parse_ts(line.get(i..i + TIMESTAMP_LEN)?)
}

fn parse_region_line(line: &str) -> Option<RegionSizeSample> {
    let mut parts = line.splitn(3, ',');
    let timestamp = parse_ts(parts.next()?)?;
    let n: usize = parts.next()?.parse().ok()?;
    let rest = parts.next()?;
    let mut sizes = Vec::with_capacity(n);
    for item in rest.split(';').filter(|s| !s.is_empty()) {
        let mut f = item.split(':').map(|x| x.parse::<usize>().ok());
        sizes.push((f.next()??, f.next()??, f.next()??));
    }
    (sizes.len() == n).then_some(RegionSizeSample { timestamp, sizes })
}

fn load_camera(root: &Path, camera: &str) -> Result<CameraData, StoreError> {
    if !valid_camera(camera) {
        return Err(StoreError::InvalidCamera(camera.to_string()));
    }
    let dir = root.join(camera);
    let mut data = CameraData::default();
    for roi in Roi::ALL {
        let path = dir.join(format!("{}.csv", roi.label()));
        let lines = read_lines(&path)?;
        let mut rows = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if i == 0 && line == SERIES_HEADER {
                continue;
            }
            let (t, v) = line.split_once(',').ok_or_else(|| corrupt(&path, i + 1, "expected `timestamp,temp_c`"))?;
            let t = parse_ts(t).ok_or_else(|| corrupt(&path, i + 1, "bad timestamp"))?;
            let v: f64 = v.trim().parse().map_err(|_| corrupt(&path, i + 1, "bad temperature"))?;
            if rows.last().is_some_and(|&(prev, _)| t <= prev) {
                return Err(corrupt(&path, i + 1, "timestamps not increasing"));
            }
            rows.push((t, v));
        }
        if let Some(&(t, _)) = rows.last() {
            data.last_sample = data.last_sample.max(Some(t));
        }
        if !rows.is_empty() {
            data.series.insert(roi, rows);
        }
    }
    let status = dir.join(STATUS_FILE);
    if let Some(last) = read_lines(&status)?.last() {
        data.last_status = Some(status_timestamp(last).ok_or_else(|| corrupt(&status, 0, "missing timestamp"))?);
    }
    let alarms = dir.join(ALARMS_FILE);
    if let Some(last) = read_lines(&alarms)?.last() {
        let rec = AlarmRecord::from_line(last).map_err(|e| corrupt(&alarms, 0, e))?;
        data.last_alarm = Some((rec.timestamp, rec.roi));
    }
    let models = dir.join(MODELS_FILE);
    if let Some(last) = read_lines(&models)?.last() {
        let snap: ModelSnapshot = serde_json::from_str(last).map_err(|e| corrupt(&models, 0, e))?;
        data.last_model = Some((snap.trained_at, snap.roi));
    }
    let regions = dir.join(REGIONS_FILE);
    if let Some(last) = read_lines(&regions)?.iter().skip(1).last() {
        data.last_regions = Some(parse_region_line(last).ok_or_else(|| corrupt(&regions, 0, "bad region row"))?.timestamp);
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alarmeval::{PredictionSource, StatusRow};
    use proptest::prelude::*;

    fn t(min: i64) -> Timestamp {
        parse_ts("2023-10-18 00:00:00").unwrap() + minutes(min)
    }

    fn sample(min: i64, v: f64) -> TemperatureSample<f64> {
        TemperatureSample { timestamp: t(min), temps: Roi::ALL.iter().map(|&r| (r, v + r.id() as f64)).collect() }
    }

    fn table(min: i64) -> StatusTable {
        let mut rois = indexmap::IndexMap::new();
        rois.insert(Roi::Body, StatusRow { temperature: 30.0, prediction: Some(29.0), alarm: 0, source: PredictionSource::Model });
        StatusTable { camera: "cam".into(), timestamp: t(min), rois }
    }

    fn alarm(min: i64) -> AlarmRecord {
        AlarmRecord {
            camera: "cam".into(),
            roi: Roi::In1,
            timestamp: t(min),
            registered: 60.0,
            predicted: 30.0,
            deviation: 30.0,
            threshold: 15.0,
        }
    }

    #[test]
    fn one_row_per_roi() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SeriesStore::open(dir.path(), 5).unwrap();
        s.append_sample("cam", &sample(0, 20.0)).unwrap();
        for roi in Roi::ALL {
            let text = fs::read_to_string(dir.path().join("cam").join(format!("{}.csv", roi.label()))).unwrap();
            assert_eq!(text, format!("timestamp,temp_c\n2023-10-18 00:00:00,{}\n", 20.0 + roi.id() as f64));
        }
        assert!(matches!(s.append_sample("cam", &sample(0, 21.0)), Err(StoreError::NonMonotonicTimestamp { .. })));
    }

    #[test]
    fn reopen_keeps_everything() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = SeriesStore::open(dir.path(), 5).unwrap();
            for i in 0..100 {
                s.append_sample("cam", &sample(5 * i, i as f64 * 0.1)).unwrap();
            }
        }
        let mut s = SeriesStore::open(dir.path(), 5).unwrap();
        for roi in Roi::ALL {
            assert_eq!(s.series("cam", roi).unwrap().len(), 100);
        }
        assert!(s.append_sample("cam", &sample(5 * 99, 0.0)).is_err());
        s.append_sample("cam", &sample(500, 0.0)).unwrap();
        assert!(matches!(SeriesStore::open(dir.path(), 1), Err(StoreError::CadenceMismatch { .. })));
        assert_eq!(SeriesStore::open_existing(dir.path()).unwrap().cadence(), 5);
    }

    #[test]
    fn windows_and_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SeriesStore::open(dir.path(), 5).unwrap();
        for i in (0..20).filter(|i| !(8..11).contains(i)) {
            s.append_sample("cam", &sample(5 * i, 1.0)).unwrap();
        }
        assert!(s.load_history("cam", Roi::Body, t(1000), t(2000)).unwrap().is_empty());
        let all = s.load_history("cam", Roi::Body, t(0), t(100)).unwrap();
        assert_eq!(all.len(), 17);
        assert!(all.has_gap());
        assert!(!s.load_history("cam", Roi::Body, t(0), t(40)).unwrap().has_gap());
    }

    #[test]
    fn torn_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = SeriesStore::open(dir.path(), 5).unwrap();
            s.append_sample("cam", &sample(0, 1.0)).unwrap();
            s.append_sample("cam", &sample(5, 2.0)).unwrap();
        }
        let path = dir.path().join("cam/body.csv");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"2023-10-18 00:10:00,3").unwrap();
        let mut s = SeriesStore::open(dir.path(), 5).unwrap();
        assert_eq!(s.series("cam", Roi::Body).unwrap().len(), 2);
        s.append_sample("cam", &sample(10, 4.0)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.ends_with("00:05:00,10\n2023-10-18 00:10:00,12\n"), "{text}");
    }

    #[test]
    fn prune_by_count_and_duration() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SeriesStore::open(dir.path(), 5).unwrap();
        for i in 0..100 {
            s.append_status(&table(5 * i)).unwrap();
        }
        s.append_alarm(&alarm(0)).unwrap();
        assert_eq!(s.prune_status("cam", Retention::Count(1000), t(500)).unwrap(), 0);
        assert_eq!(s.prune_status("cam", Retention::Count(10), t(500)).unwrap(), 90);
        let left = s.status_tables("cam").unwrap();
        assert_eq!(left.len(), 10);
        assert_eq!(left[0].timestamp, t(450));
        assert_eq!(s.alarms("cam").unwrap().len(), 1);
        assert_eq!(s.prune_status("cam", Retention::Minutes(20), t(495)).unwrap(), 5);
        assert!(s.status_tables("cam").unwrap().iter().all(|x| x.timestamp >= t(475)));
        s.append_status(&table(500)).unwrap();
        assert_eq!(s.status_tables("cam").unwrap().len(), 6);
        assert!(matches!(s.prune_status("cam", Retention::Count(0), t(0)), Err(StoreError::InvalidRetention)));
    }

    #[test]
    fn alarms_only_prunes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SeriesStore::open(dir.path(), 5).unwrap();
        s.append_alarm(&alarm(0)).unwrap();
        s.append_alarm(&alarm(5)).unwrap();
        assert_eq!(s.prune_status("cam", Retention::Count(1), t(10)).unwrap(), 0);
        assert_eq!(s.alarms("cam").unwrap().len(), 2);
        assert!(s.append_alarm(&alarm(5)).is_err());
    }

    #[test]
    fn interleaved_logs_stay_ordered() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SeriesStore::open(dir.path(), 5).unwrap();
        for i in 0..5 {
            s.append_status(&table(5 * i)).unwrap();
            s.append_alarm(&alarm(5 * i)).unwrap();
        }
        let st = s.status_tables("cam").unwrap();
        let al = s.alarms("cam").unwrap();
        assert!(st.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        assert!(al.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn region_sizes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SeriesStore::open(dir.path(), 5).unwrap();
        let a = RegionSizeSample { timestamp: t(0), sizes: vec![(0, 0, 120), (1, 0, 80), (1, 1, 9)] };
        let b = RegionSizeSample { timestamp: t(5), sizes: vec![] };
        s.append_region_sizes("cam", &a).unwrap();
        s.append_region_sizes("cam", &b).unwrap();
        assert_eq!(s.region_sizes("cam").unwrap(), vec![a, b]);
        assert!(s.append_region_sizes("cam", &RegionSizeSample { timestamp: t(5), sizes: vec![] }).is_err());
    }

    #[test]
    fn rejects_path_like_camera() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SeriesStore::open(dir.path(), 5).unwrap();
        assert!(matches!(s.append_sample("../x", &sample(0, 1.0)), Err(StoreError::InvalidCamera(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bit_exact_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            {
                let mut s = SeriesStore::open(dir.path(), 5).unwrap();
                for (i, v) in values.iter().enumerate() {
                    let smp = TemperatureSample { timestamp: t(5 * i as i64), temps: [(Roi::In2, *v)].into_iter().collect() };
                    s.append_sample("c", &smp).unwrap();
                }
            }
            let mut s = SeriesStore::open(dir.path(), 5).unwrap();
            let got = s.load_history("c", Roi::In2, t(0), t(100_000)).unwrap().values();
            prop_assert_eq!(got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}

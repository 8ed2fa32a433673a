//! Thermal frames and the `.tfr` on-disk format.
//!
//! Layout (little-endian): magic `TFRM`, format version `u16` (= 1),
//! width `u32`, height `u32`, 19 ASCII bytes `yyyy-MM-dd HH:MM:SS`, then
//! `width * height` `f32` temperatures in row-major order.
//! Every directory written to carries a `frames.idx` index with one
//! `<file name>\t<timestamp>` line per frame.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::scalar::Scalar;
use crate::time::{filename_stem, format_ts, parse_ts, Timestamp, TIMESTAMP_LEN};

use super::ImagingError;

pub const FRAME_MAGIC: &[u8; 4] = b"TFRM";
pub const FRAME_VERSION: u16 = 1;
pub const FRAME_EXTENSION: &str = "tfr";
pub const INDEX_FILE: &str = "frames.idx";

const HEADER_LEN: usize = 4 + 2 + 4 + 4 + TIMESTAMP_LEN;

/// Admissible temperature interval of the sensor, in °C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRange {
    pub min: f64,
    pub max: f64,
}

impl Default for SensorRange {
    fn default() -> Self {
        SensorRange { min: -20.0, max: 550.0 }
    }
}

impl SensorRange {
    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v >= self.min && v <= self.max
    }
}

/// A timestamped row-major grid of temperatures in °C.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalFrame<T> {
    width: usize,
    height: usize,
    timestamp: Timestamp,
    values: Vec<T>,
}

impl<T: Scalar> ThermalFrame<T> {
    /// Builds a frame checked against the default sensor range.
    pub fn new(width: usize, height: usize, timestamp: Timestamp, values: Vec<T>) -> Result<Self, ImagingError> {
        Self::with_range(width, height, timestamp, values, SensorRange::default())
    }

    pub fn with_range(
        width: usize,
        height: usize,
        timestamp: Timestamp,
        values: Vec<T>,
        range: SensorRange,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::MalformedFrame(format!("empty dimensions {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(ImagingError::MalformedFrame(format!(
                "{} values for a {width}x{height} frame",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().map(|v| v.as_f64()).find(|v| !range.contains(*v)) {
            return Err(ImagingError::OutOfRange { value: bad, min: range.min, max: range.max });
        }
        Ok(ThermalFrame { width, height, timestamp, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self) -> Timestamp {
        self.timestamp
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    /// Converts the sample type, e.g. a decoded `f32` frame into `f64`.
    pub fn cast<U: Scalar>(&self) -> ThermalFrame<U> {
        ThermalFrame {
            width: self.width,
            height: self.height,
            timestamp: self.timestamp,
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn min_max(&self) -> (T, T) {
        self.values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Serializes to the `.tfr` byte layout; values are stored as `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(format_ts(self.timestamp).as_bytes());
        for v in &self.values {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], range: SensorRange) -> Result<Self, ImagingError> {
        let malformed = |m: &str| ImagingError::MalformedFrame(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(malformed("truncated header"));
        }
        if &bytes[0..4] != FRAME_MAGIC {
            return Err(malformed("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FRAME_VERSION {
            return Err(ImagingError::MalformedFrame(format!("unsupported version {version}")));
        }
        let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let ts_text = std::str::from_utf8(&bytes[14..HEADER_LEN]).map_err(|_| malformed("non-ASCII timestamp"))?;
        let timestamp = parse_ts(ts_text).ok_or_else(|| malformed("unparseable timestamp"))?;
        let payload = &bytes[HEADER_LEN..];
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| malformed("dimension overflow"))?;
        if payload.len() != expected {
            return Err(ImagingError::MalformedFrame(format!(
                "payload holds {} bytes, header declares {width}x{height}",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        Self::with_range(width, height, timestamp, values, range)
    }
}

/// On-disk file name for a frame timestamp.
pub fn frame_file_name(ts: Timestamp) -> String {
    format!("{}.{FRAME_EXTENSION}", filename_stem(ts))
}

pub fn read_frame<T: Scalar>(path: &Path) -> Result<ThermalFrame<T>, ImagingError> {
    read_frame_with_range(path, SensorRange::default())
}

pub fn read_frame_with_range<T: Scalar>(path: &Path, range: SensorRange) -> Result<ThermalFrame<T>, ImagingError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    ThermalFrame::from_bytes(&bytes, range)
}

/// Writes `frame` into `dir` under its timestamp-derived name and records
/// the canonical timestamp in the directory index.
pub fn write_frame<T: Scalar>(frame: &ThermalFrame<T>, dir: &Path) -> Result<PathBuf, ImagingError> {
    fs::create_dir_all(dir)?;
    let name = frame_file_name(frame.timestamp);
    let path = dir.join(&name);
    let mut file = match OpenOptions::new().write(true).create_new(true).open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(ImagingError::DuplicateTimestamp(format_ts(frame.timestamp)))
        }
        Err(e) => return Err(e.into()),
    };
    file.write_all(&frame.to_bytes())?;
    let mut index = OpenOptions::new().create(true).append(true).open(dir.join(INDEX_FILE))?;
    index.write_all(format!("{name}\t{}\n", format_ts(frame.timestamp)).as_bytes())?;
    Ok(path)
}

/// Reads `frames.idx` and returns frame paths ordered by timestamp.
pub fn list_frames(dir: &Path) -> Result<Vec<(Timestamp, PathBuf)>, ImagingError> {
    let text = fs::read_to_string(dir.join(INDEX_FILE))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (name, ts) = line
            .split_once('\t')
            .ok_or_else(|| ImagingError::MalformedFrame(format!("bad index line `{line}`")))?;
        let ts = parse_ts(ts).ok_or_else(|| ImagingError::MalformedFrame(format!("bad index timestamp `{ts}`")))?;
        out.push((ts, dir.join(name)));
    }
    out.sort_by_key(|(ts, _)| *ts);
    Ok(out)
}

//! Status tables and alarm records as exchanged with the store and sinks.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::roi::Roi;
use crate::time::Timestamp;

/// Where a row's prediction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Model,
    /// Persistence fallback during cold start; never alarms.
    Fallback,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRow {
    pub temperature: f64,
    pub prediction: Option<f64>,
    /// 0 or 1.
    pub alarm: u8,
    pub source: PredictionSource,
}

impl StatusRow {
    pub fn suppressed(&self) -> bool {
        self.source != PredictionSource::Model
    }

    pub fn deviation(&self) -> Option<f64> {
        self.prediction.map(|p| (self.temperature - p).abs())
    }
}

/// Per-frame table of registered temperature, prediction and alarm bit.
///
/// Serialized as one JSON line:
/// `{"camera":"cam01","timestamp":"2023-10-18 14:05:00","rois":{"in_1":{"temperature":25.78,"prediction":27.39,"alarm":0,"source":"model"},...}}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusTable {
    pub camera: String,
    #[serde(with = "crate::time::serde_ts")]
    pub timestamp: Timestamp,
    pub rois: IndexMap<Roi, StatusRow>,
}

impl StatusTable {
    pub fn to_line(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string(self)
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn alarmed(&self) -> impl Iterator<Item = (Roi, &StatusRow)> {
        self.rois.iter().filter(|(_, r)| r.alarm == 1).map(|(k, r)| (*k, r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmRecord {
    pub camera: String,
    pub roi: Roi,
    #[serde(with = "crate::time::serde_ts")]
    pub timestamp: Timestamp,
    pub registered: f64,
    pub predicted: f64,
    pub deviation: f64,
    pub threshold: f64,
}

impl AlarmRecord {
    pub fn to_line(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string(self)
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// One retrain of one ROI, as logged for later inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub camera: String,
    pub roi: Roi,
    #[serde(with = "crate::time::serde_ts")]
    pub trained_at: Timestamp,
    pub p: usize,
    pub c: f64,
    pub phi: Vec<f64>,
}

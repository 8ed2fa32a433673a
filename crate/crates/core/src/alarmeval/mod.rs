//! Threshold alarms on the gap between registered and predicted temperature.

mod records;
mod sink;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use records::{AlarmRecord, ModelSnapshot, PredictionSource, StatusRow, StatusTable};
pub use sink::{AlertSink, FileTransport, HttpTransport, Receipt, SinkConfig, SinkError, Transport};

use crate::extraction::TemperatureSample;
use crate::forecasting::ForecasterState;
use crate::roi::Roi;
use crate::scalar::Scalar;
use crate::store::{Retention, SeriesStore, StoreError};
use crate::time::Timestamp;

pub const DEFAULT_THRESHOLD: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlarmConfig {
    /// Deviation (°C) that must be strictly exceeded.
    pub threshold: f64,
    /// When false only over-temperature (`T - T̂ > threshold`) alarms.
    pub two_sided: bool,
    /// Per-ROI threshold overrides keyed by label.
    pub per_roi: BTreeMap<Roi, f64>,
}

impl Default for AlarmConfig {
    fn default() -> Self {
        AlarmConfig { threshold: DEFAULT_THRESHOLD, two_sided: true, per_roi: BTreeMap::new() }
    }
}

impl AlarmConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        AlarmConfig { threshold, ..Self::default() }
    }

    pub fn threshold_for(&self, roi: Roi) -> f64 {
        self.per_roi.get(&roi).copied().unwrap_or(self.threshold)
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = |t: f64| t.is_finite() && t > 0.0;
        if !ok(self.threshold) || !self.per_roi.values().all(|&t| ok(t)) {
            return Err("alarm thresholds must be positive".into());
        }
        Ok(())
    }

    pub fn exceeds(&self, roi: Roi, temperature: f64, prediction: f64) -> bool {
        let d = temperature - prediction;
        let d = if self.two_sided { d.abs() } else { d };
        d > self.threshold_for(roi)
    }
}

/// Builds the status table of one sample. ROIs without a model prediction
/// take `fallback` (if any) as their displayed prediction and never alarm.
pub fn evaluate<T: Scalar>(
    camera: &str,
    sample: &TemperatureSample<T>,
    state: &ForecasterState<T>,
    config: &AlarmConfig,
    fallback: impl Fn(Roi) -> Option<T>,
) -> StatusTable {
    let mut rois = indexmap::IndexMap::with_capacity(sample.temps.len());
    for (&roi, &temp) in &sample.temps {
        let temperature = temp.as_f64();
        let row = match state.lookup_prediction(roi, sample.timestamp) {
            Ok(p) => {
                let p = p.as_f64();
                let alarm = u8::from(config.exceeds(roi, temperature, p));
                StatusRow { temperature, prediction: Some(p), alarm, source: PredictionSource::Model }
            }
            Err(_) => match fallback(roi) {
                Some(p) => StatusRow {
                    temperature,
                    prediction: Some(p.as_f64()),
                    alarm: 0,
                    source: PredictionSource::Fallback,
                },
                None => StatusRow { temperature, prediction: None, alarm: 0, source: PredictionSource::None },
            },
        };
        rois.insert(roi, row);
    }
    StatusTable { camera: camera.to_string(), timestamp: sample.timestamp, rois }
}

/// One record per alarmed row.
pub fn alarm_records(table: &StatusTable, config: &AlarmConfig) -> Vec<AlarmRecord> {
    table
        .alarmed()
        .filter_map(|(roi, row)| {
            let predicted = row.prediction?;
            Some(AlarmRecord {
                camera: table.camera.clone(),
                roi,
                timestamp: table.timestamp,
                registered: row.temperature,
                predicted,
                deviation: (row.temperature - predicted).abs(),
                threshold: config.threshold_for(roi),
            })
        })
        .collect()
}

/// Drops status tables outside `retention`; alarms are kept.
pub fn prune_status(
    store: &mut SeriesStore,
    camera: &str,
    retention: Retention,
    now: Timestamp,
) -> Result<usize, StoreError> {
    store.prune_status(camera, retention, now)
}

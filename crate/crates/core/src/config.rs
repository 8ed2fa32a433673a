//! The TOML configuration file: camera sections plus global sections for
//! forecasting, alarms, segmentation, synthesis, storage and the sink.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alarmeval::{AlarmConfig, SinkConfig, DEFAULT_THRESHOLD};
use crate::extraction::DEFAULT_TOP_FRACTION;
use crate::forecasting::{ForecastConfig, DEFAULT_RIDGE};
use crate::imaging::{MserParams, Quantization};
use crate::roi::Roi;
use crate::synthgen::SynthConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

/// One `[[camera]]` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub id: String,
    /// Minutes between frames: 1 on a wired link, 5 over radio.
    pub cadence: u32,
    /// ROI mask (PGM plus `.labels` sidecar); the built-in scene if unset.
    pub mask: Option<PathBuf>,
    /// Alarm threshold, °C.
    pub threshold: f64,
    /// Minutes between model refits.
    pub retrain_interval: u32,
    /// Overrides the global `[alert_sink]`.
    pub sink: Option<SinkConfig>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            id: "cam01".into(),
            cadence: 5,
            mask: None,
            threshold: DEFAULT_THRESHOLD,
            retrain_interval: 720,
            sink: None,
        }
    }
}

/// `[forecasting]`: model settings shared by all cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    /// Minutes of lags; the order is `lag_span / cadence`.
    pub lag_span: u32,
    pub training_span: u32,
    pub horizon: u32,
    pub ridge: f64,
    pub gap_split_factor: f64,
}

impl Default for ForecastSection {
    fn default() -> Self {
        let d = ForecastConfig::default();
        ForecastSection {
            lag_span: d.lag_span,
            training_span: d.training_span,
            horizon: d.horizon,
            ridge: DEFAULT_RIDGE,
            gap_split_factor: d.gap_split_factor,
        }
    }
}

/// `[alarms]`: policy shared by all cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlarmPolicy {
    pub two_sided: bool,
    /// Per-ROI thresholds replacing the camera's.
    pub per_roi: BTreeMap<Roi, f64>,
}

impl Default for AlarmPolicy {
    fn default() -> Self {
        AlarmPolicy { two_sided: true, per_roi: BTreeMap::new() }
    }
}

/// `[segmentation]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub enabled: bool,
    pub n_classes: usize,
    pub n_levels: usize,
    pub quantization: Quantization,
    /// Retry with fewer classes when a frame has too few distinct levels.
    pub adapt_classes: bool,
    pub mser: MserParams,
    /// Fraction of hottest pixels averaged per ROI.
    pub top_fraction: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            enabled: true,
            n_classes: 3,
            n_levels: 256,
            quantization: Quantization::FrameRange,
            adapt_classes: true,
            mser: MserParams::default(),
            top_fraction: DEFAULT_TOP_FRACTION,
        }
    }
}

/// `[store]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    /// `fsync` each append.
    pub sync: bool,
    /// Status tables older than this are pruned; unset keeps all.
    pub status_retention_minutes: Option<u64>,
    /// Minutes between prune passes.
    pub prune_interval: u32,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { sync: false, status_retention_minutes: Some(10_080), prune_interval: 720 }
    }
}

/// `[pipeline]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// Train on the reading one day earlier instead of alarmed readings.
    pub mask_alarmed_history: bool,
    /// Until a model exists, show the reading at the same time yesterday
    /// (else the last one) as prediction; it never alarms.
    pub cold_start_fallback: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { mask_alarmed_history: true, cold_start_fallback: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub camera: Vec<CameraConfig>,
    pub forecasting: ForecastSection,
    pub alarms: AlarmPolicy,
    pub segmentation: SegmentationConfig,
    pub pipeline: PipelineOptions,
    pub store: StoreConfig,
    pub synth: SynthConfig,
    pub alert_sink: Option<SinkConfig>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Canonical TOML of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Configured cameras, or the single default one.
    pub fn cameras(&self) -> Vec<CameraConfig> {
        if self.camera.is_empty() {
            vec![CameraConfig::default()]
        } else {
            self.camera.clone()
        }
    }

    pub fn camera(&self, id: Option<&str>) -> Result<CameraConfig, ConfigError> {
        let cams = self.cameras();
        match id {
            None => Ok(cams[0].clone()),
            Some(id) => cams
                .into_iter()
                .find(|c| c.id == id)
                .ok_or_else(|| ConfigError::Invalid(format!("no camera `{id}`"))),
        }
    }

    pub fn forecast_for(&self, cam: &CameraConfig) -> ForecastConfig {
        let f = &self.forecasting;
        ForecastConfig {
            cadence: cam.cadence,
            lag_span: f.lag_span,
            training_span: f.training_span,
            retrain_interval: cam.retrain_interval,
            horizon: f.horizon,
            ridge: f.ridge,
            gap_split_factor: f.gap_split_factor,
        }
    }

    pub fn alarm_for(&self, cam: &CameraConfig) -> AlarmConfig {
        AlarmConfig { threshold: cam.threshold, two_sided: self.alarms.two_sided, per_roi: self.alarms.per_roi.clone() }
    }

    pub fn sink_for<'a>(&'a self, cam: &'a CameraConfig) -> Option<&'a SinkConfig> {
        cam.sink.as_ref().or(self.alert_sink.as_ref())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let mut seen = std::collections::BTreeSet::new();
        for cam in self.cameras() {
            if !seen.insert(cam.id.clone()) {
                return invalid(format!("duplicate camera `{}`", cam.id));
            }
            if cam.id.is_empty() || !cam.id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) {
                return invalid(format!("camera id `{}` must be [A-Za-z0-9_.-]+", cam.id));
            }
            self.forecast_for(&cam).validate().map_err(|e| ConfigError::Invalid(format!("camera {}: {e}", cam.id)))?;
            self.alarm_for(&cam).validate().map_err(|e| ConfigError::Invalid(format!("camera {}: {e}", cam.id)))?;
            if let Some(s) = self.sink_for(&cam) {
                if s.url.is_none() && s.file.is_none() {
                    return invalid(format!("camera {}: alert sink needs `url` or `file`", cam.id));
                }
            }
        }
        let seg = &self.segmentation;
        if seg.n_classes < 2 || seg.n_levels < seg.n_classes || seg.n_levels > 65_536 {
            return invalid("segmentation needs 2 <= n_classes <= n_levels <= 65536".into());
        }
        if !(seg.top_fraction > 0.0 && seg.top_fraction <= 1.0) {
            return invalid("top_fraction must be in (0, 1]".into());
        }
        if self.store.prune_interval == 0 || self.store.status_retention_minutes == Some(0) {
            return invalid("store prune interval and retention must be positive".into());
        }
        self.synth.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

//! Per-camera processing loop: segment, extract, retrain, evaluate,
//! persist and emit, one frame at a time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alarmeval::{alarm_records, evaluate, AlarmConfig, AlarmRecord, AlertSink, ModelSnapshot, StatusTable};
use crate::config::{CameraConfig, Config, PipelineOptions, SegmentationConfig, StoreConfig};
use crate::extraction::{extract_all, TemperatureSample, TemperatureSeries};
use crate::forecasting::{ForecastError, ForecasterState, HistorySource};
use crate::imaging::{
    default_scene_mask, list_frames, mser_regions, otsu_multiclass, read_frame, region_size_record, ImagingError,
    RegionSizeSample, RoiMaskSet, ThermalFrame,
};
use crate::roi::Roi;
use crate::store::{CameraHistory, Retention, SeriesStore, StoreError};
use crate::synthgen::render_frame;
use crate::time::{format_ts, minutes, minutes_between, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Segmentation,
    Extraction,
    Forecast,
    Persistence,
    Emission,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("frame at {new} does not follow {last}")]
    OutOfOrder { last: String, new: String },
    #[error("store failure: {0}")]
    Store(#[from] StoreError),
    #[error("mask: {0}")]
    Mask(ImagingError),
    #[error("sink: {0}")]
    Sink(String),
    #[error("{0}")]
    Config(String),
}

impl PipelineError {
    /// Errors that stop a run rather than skip a frame.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, PipelineError::OutOfOrder { .. })
    }
}

/// Input item of the loop.
#[derive(Debug, Clone)]
pub enum Input {
    Frame(ThermalFrame<f64>),
    /// Already-extracted temperatures (no segmentation).
    Sample(TemperatureSample<f64>),
}

impl Input {
    pub fn timestamp(&self) -> Timestamp {
        match self {
            Input::Frame(f) => f.timestamp(),
            Input::Sample(s) => s.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineStepResult {
    pub timestamp: Timestamp,
    /// Absent when no temperatures could be extracted.
    pub status: Option<StatusTable>,
    pub regions: Option<RegionSizeSample>,
    pub alarms: Vec<AlarmRecord>,
    pub retrained: bool,
    pub errors: Vec<StageError>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    pub processed: usize,
    pub skipped: usize,
    pub retrains: usize,
    pub alarms: usize,
    pub status_records: usize,
    /// Error count per stage.
    pub errors: BTreeMap<Stage, usize>,
    pub first: Option<String>,
    pub last: Option<String>,
}

/// History with alarmed readings replaced by the (masked) reading one day
/// earlier, so a past anomaly does not train the next model.
struct MaskedHistory<'a> {
    inner: CameraHistory<'a>,
    overrides: Option<&'a BTreeMap<Roi, BTreeMap<Timestamp, f64>>>,
}

impl HistorySource<f64> for MaskedHistory<'_> {
    fn history(&self, roi: Roi, t0: Timestamp, t1: Timestamp) -> Result<TemperatureSeries<f64>, ForecastError> {
        let raw = self.inner.history(roi, t0, t1)?;
        let Some(subs) = self.overrides.and_then(|o| o.get(&roi)) else {
            return Ok(raw);
        };
        if subs.range(t0..t1).next().is_none() {
            return Ok(raw);
        }
        let samples = raw.samples().iter().map(|&(t, v)| (t, subs.get(&t).copied().unwrap_or(v))).collect();
        TemperatureSeries::from_samples(raw.camera.clone(), roi, raw.cadence, samples)
            .map_err(|e| ForecastError::History(e.to_string()))
    }
}

/// Processing state of one camera.
pub struct Pipeline {
    camera: CameraConfig,
    segmentation: SegmentationConfig,
    options: PipelineOptions,
    store_cfg: StoreConfig,
    alarm: AlarmConfig,
    masks: RoiMaskSet,
    forecaster: ForecasterState<f64>,
    sink: Option<AlertSink>,
    last: Option<Timestamp>,
    overrides: BTreeMap<Roi, BTreeMap<Timestamp, f64>>,
    last_prune: Option<Timestamp>,
}

impl Pipeline {
    /// Resumes after whatever the store already holds for the camera.
    pub fn new(config: &Config, camera: &CameraConfig, store: &mut SeriesStore) -> Result<Self, PipelineError> {
        let masks = match &camera.mask {
            Some(p) => RoiMaskSet::load(p).map_err(PipelineError::Mask)?,
            None => default_scene_mask(),
        };
        Self::with_masks(config, camera, masks, store)
    }

    pub fn with_masks(
        config: &Config,
        camera: &CameraConfig,
        masks: RoiMaskSet,
        store: &mut SeriesStore,
    ) -> Result<Self, PipelineError> {
        if store.cadence() != camera.cadence {
            return Err(PipelineError::Config(format!(
                "camera {} has cadence {} but the store uses {}",
                camera.id,
                camera.cadence,
                store.cadence()
            )));
        }
        let forecaster = ForecasterState::new(config.forecast_for(camera)).map_err(|e| PipelineError::Config(e.to_string()))?;
        let sink = match config.sink_for(camera) {
            Some(s) => Some(AlertSink::from_config(s).map_err(PipelineError::Sink)?),
            None => None,
        };
        store.preload(&camera.id)?;
        let last = store.last_sample(&camera.id)?;
        let mut overrides: BTreeMap<Roi, BTreeMap<Timestamp, f64>> = BTreeMap::new();
        for a in store.alarms(&camera.id)? {
            let v = substitute(store, &overrides, &camera.id, a.roi, a.timestamp)?.unwrap_or(a.predicted);
            overrides.entry(a.roi).or_default().insert(a.timestamp, v);
        }
        Ok(Pipeline {
            camera: camera.clone(),
            segmentation: config.segmentation.clone(),
            options: config.pipeline.clone(),
            store_cfg: config.store.clone(),
            alarm: config.alarm_for(camera),
            masks,
            forecaster,
            sink,
            last,
            overrides,
            last_prune: None,
        })
    }

    pub fn camera(&self) -> &CameraConfig {
        &self.camera
    }

    pub fn masks(&self) -> &RoiMaskSet {
        &self.masks
    }

    pub fn forecaster(&self) -> &ForecasterState<f64> {
        &self.forecaster
    }

    pub fn alarm_config(&self) -> &AlarmConfig {
        &self.alarm
    }

    /// Both segmentation paths, then the temperature stages.
    pub fn step(&mut self, store: &mut SeriesStore, frame: &ThermalFrame<f64>) -> Result<PipelineStepResult, PipelineError> {
        self.check_order(frame.timestamp())?;
        let mut errors = Vec::new();
        let mut regions = None;
        if self.segmentation.enabled {
            match self.segment(frame) {
                Ok(r) => {
                    if let Err(e) = store.append_region_sizes(&self.camera.id, &r) {
                        persist_error(&mut errors, e)?;
                    }
                    regions = Some(r);
                }
                Err(e) => errors.push(StageError { stage: Stage::Segmentation, message: e.to_string() }),
            }
        }
        let sample = match extract_all(frame, &self.masks, self.segmentation.top_fraction) {
            Ok(x) => {
                for roi in &x.missing {
                    errors.push(StageError { stage: Stage::Extraction, message: format!("{roi} has no pixels") });
                }
                Some(x.sample)
            }
            Err(e) => {
                errors.push(StageError { stage: Stage::Extraction, message: e.to_string() });
                None
            }
        };
        let mut result = self.process(store, frame.timestamp(), sample.as_ref(), errors)?;
        result.regions = regions;
        Ok(result)
    }

    /// Temperature stages only, for already-extracted samples.
    pub fn step_sample(
        &mut self,
        store: &mut SeriesStore,
        sample: &TemperatureSample<f64>,
    ) -> Result<PipelineStepResult, PipelineError> {
        self.check_order(sample.timestamp)?;
        self.process(store, sample.timestamp, Some(sample), Vec::new())
    }

    pub fn step_input(&mut self, store: &mut SeriesStore, input: &Input) -> Result<PipelineStepResult, PipelineError> {
        match input {
            Input::Frame(f) => self.step(store, f),
            Input::Sample(s) => self.step_sample(store, s),
        }
    }

    fn check_order(&self, t: Timestamp) -> Result<(), PipelineError> {
        match self.last {
            Some(last) if t <= last => Err(PipelineError::OutOfOrder { last: format_ts(last), new: format_ts(t) }),
            _ => Ok(()),
        }
    }

    fn segment(&self, frame: &ThermalFrame<f64>) -> Result<RegionSizeSample, ImagingError> {
        let seg = &self.segmentation;
        let quant = match otsu_multiclass(frame, seg.n_classes, seg.n_levels, seg.quantization) {
            Err(ImagingError::InsufficientContrast { distinct, .. }) if seg.adapt_classes && distinct >= 2 => {
                otsu_multiclass(frame, distinct, seg.n_levels, seg.quantization)?
            }
            other => other?,
        };
        let regions = mser_regions(frame, &quant, &seg.mser);
        Ok(region_size_record(&regions, frame.timestamp()))
    }

    fn process(
        &mut self,
        store: &mut SeriesStore,
        now: Timestamp,
        sample: Option<&TemperatureSample<f64>>,
        mut errors: Vec<StageError>,
    ) -> Result<PipelineStepResult, PipelineError> {
        let cam = self.camera.id.clone();
        let rois: Vec<Roi> = match sample {
            Some(s) => s.temps.keys().copied().collect(),
            None => self.masks.present_rois(),
        };

        let outcome = {
            let source = MaskedHistory {
                inner: store.history_source(&cam),
                overrides: self.options.mask_alarmed_history.then_some(&self.overrides),
            };
            self.forecaster.maybe_retrain(&source, &rois, now)
        };
        for (roi, e) in &outcome.failures {
            let quiet = matches!(e, ForecastError::InsufficientHistory { .. });
            if quiet {
                log::debug!("{cam} {}: {roi}: {e}", format_ts(now));
            } else {
                errors.push(StageError { stage: Stage::Forecast, message: format!("{roi}: {e}") });
            }
        }
        for (roi, model) in &outcome.fitted {
            let snap = ModelSnapshot {
                camera: cam.clone(),
                roi: *roi,
                trained_at: model.trained_at,
                p: model.order(),
                c: model.intercept,
                phi: model.coefficients.clone(),
            };
            if let Err(e) = store.append_model(&snap) {
                persist_error(&mut errors, e)?;
            }
        }

        let Some(sample) = sample else {
            self.last = Some(now);
            return Ok(PipelineStepResult {
                timestamp: now,
                status: None,
                regions: None,
                alarms: Vec::new(),
                retrained: outcome.retrained,
                errors,
            });
        };

        let mut fallback = BTreeMap::new();
        if self.options.cold_start_fallback {
            for &roi in sample.temps.keys() {
                let v = match reading_at(store.series(&cam, roi)?, now - minutes(1440)) {
                    Some(v) => Some(v),
                    None => store.series(&cam, roi)?.last().map(|&(_, v)| v),
                };
                if let Some(v) = v {
                    fallback.insert(roi, v);
                }
            }
        }
        let table = evaluate(&cam, sample, &self.forecaster, &self.alarm, |roi| fallback.get(&roi).copied());
        let alarms = alarm_records(&table, &self.alarm);

        match store.append_sample(&cam, sample) {
            Ok(()) => {}
            Err(e) => persist_error(&mut errors, e)?,
        }
        self.last = Some(now);
        if let Err(e) = store.append_status(&table) {
            persist_error(&mut errors, e)?;
        }
        for a in &alarms {
            if let Err(e) = store.append_alarm(a) {
                persist_error(&mut errors, e)?;
            }
            let v = substitute(store, &self.overrides, &cam, a.roi, a.timestamp)?.unwrap_or(a.predicted);
            self.overrides.entry(a.roi).or_default().insert(a.timestamp, v);
        }
        if let Some(sink) = &mut self.sink {
            if let Err(e) = sink.emit(&table) {
                errors.push(StageError { stage: Stage::Emission, message: e.to_string() });
            }
        }
        self.maybe_prune(store, now, &mut errors)?;
        Ok(PipelineStepResult {
            timestamp: now,
            status: Some(table),
            regions: None,
            alarms,
            retrained: outcome.retrained,
            errors,
        })
    }

    fn maybe_prune(&mut self, store: &mut SeriesStore, now: Timestamp, errors: &mut Vec<StageError>) -> Result<(), PipelineError> {
        let Some(keep) = self.store_cfg.status_retention_minutes else {
            return Ok(());
        };
        let due = match self.last_prune {
            None => true,
            Some(t) => minutes_between(t, now) >= self.store_cfg.prune_interval as f64,
        };
        if due {
            self.last_prune = Some(now);
            if let Err(e) = store.prune_status(&self.camera.id, Retention::Minutes(keep), now) {
                persist_error(errors, e)?;
            }
        }
        Ok(())
    }

    /// Steps every input in order. Frame-level failures are counted and
    /// skipped; store failures abort.
    pub fn run<I, E>(
        &mut self,
        store: &mut SeriesStore,
        inputs: I,
        mut on_step: impl FnMut(&PipelineStepResult),
    ) -> Result<RunSummary, PipelineError>
    where
        I: IntoIterator<Item = Result<Input, E>>,
        E: std::fmt::Display,
    {
        let mut summary = RunSummary::default();
        for item in inputs {
            summary.frames += 1;
            let input = match item {
                Ok(i) => i,
                Err(e) => {
                    log::warn!("{}: unreadable input: {e}", self.camera.id);
                    summary.skipped += 1;
                    *summary.errors.entry(Stage::Ingest).or_default() += 1;
                    continue;
                }
            };
            let ts = format_ts(input.timestamp());
            match self.step_input(store, &input) {
                Ok(r) => {
                    summary.processed += 1;
                    summary.retrains += usize::from(r.retrained);
                    summary.alarms += r.alarms.len();
                    summary.status_records += usize::from(r.status.is_some());
                    for e in &r.errors {
                        *summary.errors.entry(e.stage).or_default() += 1;
                    }
                    summary.first.get_or_insert_with(|| ts.clone());
                    summary.last = Some(ts);
                    on_step(&r);
                }
                Err(e) if !e.is_fatal() => {
                    log::warn!("{}: skipped input: {e}", self.camera.id);
                    summary.skipped += 1;
                    *summary.errors.entry(Stage::Ingest).or_default() += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(summary)
    }
}

fn reading_at(series: &[(Timestamp, f64)], t: Timestamp) -> Option<f64> {
    series.binary_search_by_key(&t, |&(ts, _)| ts).ok().map(|i| series[i].1)
}

/// Masked reading one day before `t`, if there is one.
fn substitute(
    store: &mut SeriesStore,
    overrides: &BTreeMap<Roi, BTreeMap<Timestamp, f64>>,
    camera: &str,
    roi: Roi,
    t: Timestamp,
) -> Result<Option<f64>, StoreError> {
    let day_before = t - minutes(1440);
    if let Some(&v) = overrides.get(&roi).and_then(|o| o.get(&day_before)) {
        return Ok(Some(v));
    }
    Ok(reading_at(store.series(camera, roi)?, day_before))
}

/// Non-monotonic appends are recorded; I/O and corruption abort.
fn persist_error(errors: &mut Vec<StageError>, e: StoreError) -> Result<(), PipelineError> {
    match e {
        StoreError::NonMonotonicTimestamp { .. } => {
            errors.push(StageError { stage: Stage::Persistence, message: e.to_string() });
            Ok(())
        }
        other => Err(PipelineError::Store(other)),
    }
}

/// Replays frame files of a directory in timestamp order.
pub fn directory_frames(dir: &Path) -> Result<impl Iterator<Item = Result<Input, ImagingError>>, ImagingError> {
    let files: Vec<(Timestamp, PathBuf)> = list_frames(dir)?;
    Ok(files.into_iter().map(|(_, p)| read_frame::<f64>(&p).map(Input::Frame)))
}

/// Per-ROI series zipped into samples by timestamp.
pub fn series_samples(series: &BTreeMap<Roi, TemperatureSeries<f64>>) -> Vec<TemperatureSample<f64>> {
    let mut by_time: BTreeMap<Timestamp, BTreeMap<Roi, f64>> = BTreeMap::new();
    for (&roi, s) in series {
        for &(t, v) in s.samples() {
            by_time.entry(t).or_default().insert(roi, v);
        }
    }
    by_time.into_iter().map(|(timestamp, temps)| TemperatureSample { timestamp, temps }).collect()
}

/// Frames rendered on the fly from per-ROI series.
pub fn rendered_frames<'a>(
    series: &BTreeMap<Roi, TemperatureSeries<f64>>,
    masks: &'a RoiMaskSet,
) -> impl Iterator<Item = Result<Input, crate::synthgen::SynthError>> + 'a {
    series_samples(series)
        .into_iter()
        .map(move |s| render_frame(&s.temps, masks, s.timestamp).map(Input::Frame))
}

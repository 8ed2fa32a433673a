//! Online retraining of the per-ROI models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::extraction::TemperatureSeries;
use crate::roi::Roi;
use crate::scalar::Scalar;
use crate::time::{minutes, minutes_between, Timestamp};

use super::model::{fit, min_history, predict_window, ArModel, PredictionWindow, DEFAULT_RIDGE};
use super::ForecastError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// Sampling interval of the series, minutes.
    pub cadence: u32,
    /// Minutes covered by the lags; the model order is `lag_span / cadence`.
    pub lag_span: u32,
    /// Length of the training slice ending at the retrain instant, minutes.
    pub training_span: u32,
    pub retrain_interval: u32,
    pub horizon: u32,
    pub ridge: f64,
    /// Gaps longer than this many cadences split the training slice;
    /// shorter ones are linearly interpolated.
    pub gap_split_factor: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            cadence: 5,
            lag_span: 1440,
            training_span: 4320,
            retrain_interval: 720,
            horizon: 720,
            ridge: DEFAULT_RIDGE,
            gap_split_factor: 3.0,
        }
    }
}

impl ForecastConfig {
    pub fn with_cadence(cadence: u32) -> Self {
        ForecastConfig { cadence, ..Self::default() }
    }

    pub fn order(&self) -> usize {
        (self.lag_span / self.cadence) as usize
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: String| Err(ForecastError::InvalidConfig(m));
        if self.cadence == 0 || self.lag_span % self.cadence != 0 || self.lag_span == 0 {
            return bad(format!("lag span {} is not a positive multiple of cadence {}", self.lag_span, self.cadence));
        }
        if self.training_span < 2880 {
            return bad(format!("training span {} min is below the 48 h minimum", self.training_span));
        }
        if self.retrain_interval == 0 || self.horizon < self.cadence {
            return bad("retrain interval and horizon must be positive".into());
        }
        if !(self.ridge >= 0.0) || !(self.gap_split_factor >= 1.5) {
            return bad("ridge must be >= 0 and gap split factor >= 1.5".into());
        }
        Ok(())
    }
}

/// Source of stored history for retraining.
pub trait HistorySource<T> {
    /// Samples of `roi` with `t0 <= t < t1`.
    fn history(&self, roi: Roi, t0: Timestamp, t1: Timestamp) -> Result<TemperatureSeries<T>, ForecastError>;
}

/// Models and prediction windows of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterState<T> {
    pub config: ForecastConfig,
    pub models: BTreeMap<Roi, ArModel<T>>,
    pub windows: BTreeMap<Roi, PredictionWindow<T>>,
    pub last_trained: Option<Timestamp>,
    /// Number of retrain events so far.
    pub retrains: usize,
}

/// What one [`ForecasterState::maybe_retrain`] call did.
#[derive(Debug, Default)]
pub struct RetrainOutcome<T> {
    pub retrained: bool,
    pub fitted: Vec<(Roi, ArModel<T>)>,
    pub failures: Vec<(Roi, ForecastError)>,
}

impl<T: Scalar> ForecasterState<T> {
    pub fn new(config: ForecastConfig) -> Result<Self, ForecastError> {
        config.validate()?;
        Ok(ForecasterState { config, models: BTreeMap::new(), windows: BTreeMap::new(), last_trained: None, retrains: 0 })
    }

    pub fn is_due(&self, now: Timestamp) -> bool {
        match self.last_trained {
            None => true,
            Some(t) => minutes_between(t, now) >= self.config.retrain_interval as f64,
        }
    }

    /// Refits every ROI when at least one retrain interval has passed
    /// since the last retrain (or on the first call).
    ///
    /// The training slice is `[now - training_span, now)` and the new window
    /// covers up to `now + horizon`. A failing ROI loses its window and keeps
    /// its previous model; the others proceed.
    pub fn maybe_retrain(
        &mut self,
        source: &dyn HistorySource<T>,
        rois: &[Roi],
        now: Timestamp,
    ) -> RetrainOutcome<T> {
        let mut outcome = RetrainOutcome { retrained: false, fitted: Vec::new(), failures: Vec::new() };
        if !self.is_due(now) {
            return outcome;
        }
        outcome.retrained = true;
        self.retrains += 1;
        self.last_trained = Some(now);
        for &roi in rois {
            self.windows.remove(&roi);
            match self.retrain_roi(source, roi, now) {
                Ok((model, window)) => {
                    self.windows.insert(roi, window);
                    self.models.insert(roi, model.clone());
                    outcome.fitted.push((roi, model));
                }
                Err(e) => outcome.failures.push((roi, e)),
            }
        }
        outcome
    }

    fn retrain_roi(
        &self,
        source: &dyn HistorySource<T>,
        roi: Roi,
        now: Timestamp,
    ) -> Result<(ArModel<T>, PredictionWindow<T>), ForecastError> {
        let cfg = &self.config;
        let t0 = now - minutes(cfg.training_span as i64);
        let raw = source.history(roi, t0, now)?;
        let slice = regularize(&raw, cfg.gap_split_factor);
        let p = cfg.order();
        if slice.len() < min_history(p) {
            return Err(ForecastError::InsufficientHistory { have: slice.len(), need: min_history(p) });
        }
        let mut model = fit(&slice, p, cfg.ridge)?;
        model.trained_at = now;
        let seed = &slice.samples()[slice.len() - p..];
        let start = seed[p - 1].0 + minutes(cfg.cadence as i64);
        let lead = minutes_between(start, now).max(0.0) as u32;
        let horizon = (cfg.horizon + lead).div_ceil(cfg.cadence) * cfg.cadence;
        let window = predict_window(&model, roi, seed, start, horizon)?;
        Ok((model, window))
    }

    /// Predicted value for `roi` at `t`.
    pub fn lookup_prediction(&self, roi: Roi, t: Timestamp) -> Result<T, ForecastError> {
        self.windows.get(&roi).and_then(|w| w.at(t)).ok_or(ForecastError::NoPrediction(roi, t))
    }
}

/// Keeps the contiguous suffix after the last gap longer than
/// `split_factor` cadences, snaps it to the cadence grid and fills shorter
/// gaps by linear interpolation.
pub fn regularize<T: Scalar>(series: &TemperatureSeries<T>, split_factor: f64) -> TemperatureSeries<T> {
    let cadence = series.cadence;
    let samples = series.samples();
    let cut = series.gaps_over(split_factor).last().copied().unwrap_or(0);
    let tail = &samples[cut..];
    let mut out = TemperatureSeries::new(series.camera.clone(), series.roi, cadence);
    let Some(&(first, v0)) = tail.first() else {
        return out;
    };
    let step = cadence as f64;
    out.push(first, v0).expect("first sample");
    let mut prev = (0.0, v0);
    for &(t, v) in &tail[1..] {
        let pos = (minutes_between(first, t) / step).round();
        let last_pos = prev.0;
        if pos <= last_pos {
            continue;
        }
        let span = pos - last_pos;
        for k in 1..span as usize {
            let frac = T::of(k as f64 / span);
            let at = first + minutes(((last_pos as usize + k) as u32 * cadence) as i64);
            out.push(at, prev.1 + (v - prev.1) * frac).expect("increasing grid");
        }
        let at = first + minutes((pos as u32 * cadence) as i64);
        out.push(at, v).expect("increasing grid");
        prev = (pos, v);
    }
    out
}

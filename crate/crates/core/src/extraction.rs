//! Per-ROI operating temperature: mean of the hottest fraction of pixels.

use std::collections::BTreeMap;

use crate::imaging::{roi_pixels, ImagingError, RoiMaskSet, ThermalFrame};
use crate::roi::Roi;
use crate::scalar::Scalar;
use crate::time::{minutes_between, Timestamp};

/// Fraction of hottest pixels averaged per region.
pub const DEFAULT_TOP_FRACTION: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("region has no pixels")]
    EmptyRegion,
    #[error("top fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("no ROI of the mask has pixels")]
    AllRegionsEmpty,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// One temperature per ROI at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSample<T> {
    pub timestamp: Timestamp,
    pub temps: BTreeMap<Roi, T>,
}

/// Ordered `(timestamp, °C)` samples of one ROI of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSeries<T> {
    pub camera: String,
    pub roi: Roi,
    /// Nominal sampling interval in minutes.
    pub cadence: u32,
    samples: Vec<(Timestamp, T)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("timestamp {new} does not follow {last}")]
pub struct NonMonotonic {
    pub last: Timestamp,
    pub new: Timestamp,
}

impl<T: Scalar> TemperatureSeries<T> {
    pub fn new(camera: impl Into<String>, roi: Roi, cadence: u32) -> Self {
        TemperatureSeries { camera: camera.into(), roi, cadence, samples: Vec::new() }
    }

    pub fn from_samples(
        camera: impl Into<String>,
        roi: Roi,
        cadence: u32,
        samples: Vec<(Timestamp, T)>,
    ) -> Result<Self, NonMonotonic> {
        let mut s = Self::new(camera, roi, cadence);
        s.samples.reserve(samples.len());
        for (t, v) in samples {
            s.push(t, v)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, t: Timestamp, v: T) -> Result<(), NonMonotonic> {
        if let Some(&(last, _)) = self.samples.last() {
            if t <= last {
                return Err(NonMonotonic { last, new: t });
            }
        }
        self.samples.push((t, v));
        Ok(())
    }

    pub fn samples(&self) -> &[(Timestamp, T)] {
        &self.samples
    }

    pub fn values(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.1).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> Option<(Timestamp, T)> {
        self.samples.first().copied()
    }

    pub fn last(&self) -> Option<(Timestamp, T)> {
        self.samples.last().copied()
    }

    /// Indices `i` where the step from sample `i - 1` to `i` exceeds
    /// `factor` cadences.
    pub fn gaps_over(&self, factor: f64) -> Vec<usize> {
        let limit = factor * self.cadence as f64;
        (1..self.samples.len())
            .filter(|&i| minutes_between(self.samples[i - 1].0, self.samples[i].0) > limit)
            .collect()
    }

    /// Gaps as flagged for storage: intervals longer than 1.5 cadences.
    pub fn gaps(&self) -> Vec<usize> {
        self.gaps_over(1.5)
    }

    pub fn has_gap(&self) -> bool {
        !self.gaps().is_empty()
    }

    /// Samples with `t0 <= t < t1`.
    pub fn window(&self, t0: Timestamp, t1: Timestamp) -> Self {
        let a = self.samples.partition_point(|s| s.0 < t0);
        let b = self.samples.partition_point(|s| s.0 < t1);
        TemperatureSeries {
            camera: self.camera.clone(),
            roi: self.roi,
            cadence: self.cadence,
            samples: self.samples[a..b.max(a)].to_vec(),
        }
    }

    /// The value at exactly `t`, if sampled.
    pub fn value_at(&self, t: Timestamp) -> Option<T> {
        self.samples.binary_search_by_key(&t, |s| s.0).ok().map(|i| self.samples[i].1)
    }
}

/// Mean of the `ceil(top_fraction * N)` largest values (at least one).
///
/// The mean is accumulated as offsets from the smallest selected value, so
/// a region of identical pixels returns that value bit-for-bit.
pub fn roi_temperature<T: Scalar>(pixels: &[T], top_fraction: f64) -> Result<T, ExtractionError> {
    if pixels.is_empty() {
        return Err(ExtractionError::EmptyRegion);
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(ExtractionError::BadFraction(top_fraction));
    }
    let n = pixels.len();
    let k = ((top_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut buf = pixels.to_vec();
    let cmp = |a: &T, b: &T| b.partial_cmp(a).expect("finite temperatures");
    if k < n {
        buf.select_nth_unstable_by(k - 1, cmp);
    }
    let top = &buf[..k];
    let base = top.iter().copied().fold(T::infinity(), T::min);
    let excess: T = top.iter().map(|&v| v - base).sum();
    Ok(base + excess / T::of_usize(k))
}

/// Result of [`extract_all`]: the sample plus ROIs that had to be skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction<T> {
    pub sample: TemperatureSample<T>,
    pub missing: Vec<Roi>,
}

/// Applies [`roi_temperature`] to every ROI of the mask.
pub fn extract_all<T: Scalar>(
    frame: &ThermalFrame<T>,
    masks: &RoiMaskSet,
    top_fraction: f64,
) -> Result<Extraction<T>, ExtractionError> {
    masks.check_dims(frame)?;
    let mut temps = BTreeMap::new();
    let mut missing = Vec::new();
    for roi in Roi::ALL {
        let pixels = roi_pixels(frame, masks, roi)?;
        if pixels.is_empty() {
            log::warn!("{}: ROI {roi} has no pixels, omitted", crate::time::format_ts(frame.timestamp()));
            missing.push(roi);
            continue;
        }
        temps.insert(roi, roi_temperature(&pixels, top_fraction)?);
    }
    if temps.is_empty() {
        return Err(ExtractionError::AllRegionsEmpty);
    }
    Ok(Extraction { sample: TemperatureSample { timestamp: frame.timestamp(), temps }, missing })
}

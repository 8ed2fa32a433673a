//! Whole-span synthesis: one modelled day after another, then the
//! scheduled heating anomalies.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::extraction::TemperatureSeries;
use crate::roi::Roi;
use crate::scalar::Scalar;
use crate::time::{minutes, Timestamp};

use super::aemet::AmbientDay;
use super::daymodel::{synth_day, DayKind, DayModel, RadiativeParams};
use super::heater::{inject_anomaly, GroundTruthEntry, HeaterConfig, HeaterParams, Integrator};
use super::SynthError;

/// Generation settings (`synth` section of the config).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// First generated day.
    pub start: NaiveDate,
    pub days: u32,
    /// Minutes between samples.
    pub cadence: u32,
    pub radiative: RadiativeParams,
    /// Extra non-weekend holidays.
    pub holidays: Vec<NaiveDate>,
    /// Anomalies per 365 days when `anomaly_count` is unset.
    pub anomalies_per_year: f64,
    pub anomaly_count: Option<usize>,
    /// Leading days kept free of anomalies (the forecaster's warm-up).
    pub warmup_days: u32,
    /// Earliest and latest heater start, minutes after midnight.
    pub anomaly_window: (u32, u32),
    /// Heater on-time, minutes.
    pub anomaly_duration: u32,
    /// Heater output drawn uniformly from `[q_min, q_max]` W.
    pub q_min: f64,
    pub q_max: f64,
    pub heater: HeaterConfig,
    /// Integration step, seconds.
    pub dt: f64,
    pub integrator: Integrator,
    /// Ambient data file; the bundled 2022 file when unset.
    pub aemet: Option<std::path::PathBuf>,
    /// Recorded model days; the bundled stand-ins when unset.
    pub weekday_model: Option<std::path::PathBuf>,
    pub holiday_model: Option<std::path::PathBuf>,
    /// Ambient `T_max - T_min` on each model day.
    pub weekday_ambient_range: f64,
    pub holiday_ambient_range: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            start: NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date"),
            days: 365,
            cadence: 5,
            radiative: RadiativeParams::default(),
            holidays: Vec::new(),
            anomalies_per_year: 12.0,
            anomaly_count: None,
            warmup_days: 4,
            anomaly_window: (360, 1080),
            anomaly_duration: 30,
            q_min: 500.0,
            q_max: 5000.0,
            heater: HeaterConfig::default(),
            dt: 1.0,
            integrator: Integrator::Rk4,
            aemet: None,
            weekday_model: None,
            holiday_model: None,
            weekday_ambient_range: 12.0,
            holiday_ambient_range: 11.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.days == 0 {
            return bad("days must be positive");
        }
        if self.cadence == 0 || 1440 % self.cadence != 0 {
            return bad("cadence must divide 1440 minutes");
        }
        if !(self.radiative.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if self.anomaly_window.0 > self.anomaly_window.1 || self.anomaly_window.1 >= 1440 {
            return bad("anomaly window must be ordered minutes within a day");
        }
        if self.anomaly_duration == 0 || !(0.0 <= self.q_min && self.q_min <= self.q_max) {
            return bad("anomaly duration and heater power range must be positive and ordered");
        }
        if !(self.dt > 0.0 && self.dt <= self.cadence as f64 * 60.0) {
            return bad("dt must be in (0, cadence]");
        }
        if !(self.anomalies_per_year >= 0.0) {
            return bad("anomalies_per_year must be >= 0");
        }
        Ok(())
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.days as i64).map(|i| self.start + Duration::days(i)).collect()
    }

    /// Anomalies to inject over the configured span.
    pub fn anomaly_total(&self) -> usize {
        self.anomaly_count
            .unwrap_or_else(|| (self.anomalies_per_year * self.days as f64 / 365.0).round() as usize)
    }
}

/// One scheduled heating event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub date: NaiveDate,
    pub roi: Roi,
    /// Heater start, minutes after midnight.
    pub start: u32,
    /// Heater on-time, minutes.
    pub duration: u32,
    /// Heater output, W.
    pub q: f64,
}

impl AnomalySpec {
    pub fn start_time(&self) -> Timestamp {
        self.date.and_time(NaiveTime::MIN) + minutes(self.start as i64)
    }
}

/// Day models keyed by kind and ROI.
pub type ModelSet<T> = BTreeMap<(DayKind, Roi), DayModel<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticYear<T> {
    pub series: BTreeMap<Roi, TemperatureSeries<T>>,
    pub schedule: Vec<AnomalySpec>,
    pub ground_truth: Vec<GroundTruthEntry>,
    pub seed: u64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed) ^ stream))
}

const SCHEDULE_STREAM: u64 = u64::MAX;

/// Noise stream of one ROI on one date, independent of the span generated.
pub fn day_stream(seed: u64, date: NaiveDate, roi: Roi) -> ChaCha8Rng {
    let day = chrono::Datelike::num_days_from_ce(&date) as u64;
    stream_rng(seed, (day << 8) | roi.id() as u64)
}

/// Draws the anomaly schedule: distinct days after the warm-up, uniform
/// ROI, start time on the cadence grid and heater power.
pub fn make_schedule(cfg: &SynthConfig, seed: u64) -> Result<Vec<AnomalySpec>, SynthError> {
    let n = cfg.anomaly_total();
    let eligible = cfg.days.saturating_sub(cfg.warmup_days) as usize;
    if n > eligible {
        return Err(SynthError::InvalidConfig(format!("{n} anomalies need {n} days after warm-up, have {eligible}")));
    }
    let mut rng = stream_rng(seed, SCHEDULE_STREAM);
    let mut picks = index::sample(&mut rng, eligible, n).into_vec();
    picks.sort_unstable();
    let (lo, hi) = (cfg.anomaly_window.0 / cfg.cadence, cfg.anomaly_window.1 / cfg.cadence);
    let dates = cfg.dates();
    Ok(picks
        .into_iter()
        .map(|i| {
            let roi = Roi::ALL[rng.gen_range(0..Roi::ALL.len())];
            let start = rng.gen_range(lo..=hi) * cfg.cadence;
            let q = if cfg.q_max > cfg.q_min { rng.gen_range(cfg.q_min..cfg.q_max) } else { cfg.q_min };
            AnomalySpec { date: dates[cfg.warmup_days as usize + i], roi, start, duration: cfg.anomaly_duration, q }
        })
        .collect())
}

/// Builds the configured span for every ROI that has models of both kinds.
pub fn synth_year<T: Scalar>(
    models: &ModelSet<T>,
    ambient: &[AmbientDay],
    schedule: &[AnomalySpec],
    cfg: &SynthConfig,
    camera: &str,
    seed: u64,
) -> Result<SyntheticYear<T>, SynthError> {
    cfg.validate()?;
    let by_date: BTreeMap<NaiveDate, &AmbientDay> = ambient.iter().map(|d| (d.date, d)).collect();
    let rois: Vec<Roi> = Roi::ALL
        .into_iter()
        .filter(|&r| models.contains_key(&(DayKind::Weekday, r)) || models.contains_key(&(DayKind::Holiday, r)))
        .collect();
    let per_day = (1440 / cfg.cadence) as usize;
    let mut values: BTreeMap<Roi, Vec<(Timestamp, T)>> =
        rois.iter().map(|&r| (r, Vec::with_capacity(per_day * cfg.days as usize))).collect();
    for date in cfg.dates() {
        let amb = by_date.get(&date).ok_or(SynthError::MissingAmbient(date))?;
        let kind = DayKind::of(date, &cfg.holidays);
        let midnight = date.and_time(NaiveTime::MIN);
        for &roi in &rois {
            let model = models.get(&(kind, roi)).ok_or(SynthError::MissingModel(kind, roi))?;
            let mut rng = day_stream(seed, date, roi);
            let day = synth_day(model, amb, &cfg.radiative, cfg.cadence, &mut rng);
            let out = values.get_mut(&roi).expect("roi listed");
            out.extend(day.into_iter().enumerate().map(|(i, v)| (midnight + minutes((i as u32 * cfg.cadence) as i64), v)));
        }
    }
    let mut series: BTreeMap<Roi, TemperatureSeries<T>> = values
        .into_iter()
        .map(|(roi, v)| (roi, TemperatureSeries::from_samples(camera, roi, cfg.cadence, v).expect("increasing by construction")))
        .collect();
    let mut ground_truth = Vec::with_capacity(schedule.len());
    for spec in schedule {
        let base = series.get(&spec.roi).ok_or(SynthError::MissingModel(DayKind::Weekday, spec.roi))?;
        let start = spec.start_time();
        let heater = HeaterParams {
            physics: cfg.heater.clone(),
            q: spec.q,
            on_window: (start, start + minutes(spec.duration as i64)),
        };
        let (modified, entry) = inject_anomaly(base, &heater, cfg.dt, cfg.integrator)
            .map_err(|e| SynthError::Context(format!("anomaly on {} {}", spec.date, spec.roi), Box::new(e)))?;
        series.insert(spec.roi, modified);
        ground_truth.push(entry);
    }
    Ok(SyntheticYear { series, schedule: schedule.to_vec(), ground_truth, seed })
}

/// Per-ROI values at sample `i` (all series share timestamps).
pub fn sample_at<T: Scalar>(year: &SyntheticYear<T>, i: usize) -> Option<(Timestamp, BTreeMap<Roi, T>)> {
    let mut ts = None;
    let mut out = BTreeMap::new();
    for (&roi, s) in &year.series {
        let &(t, v) = s.samples().get(i)?;
        ts = Some(t);
        out.insert(roi, v);
    }
    ts.map(|t| (t, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::daymodel::{radiative_offset, tau_of};

    fn models(sigma: f64) -> ModelSet<f64> {
        let mut m = ModelSet::new();
        for roi in Roi::ALL {
            for (kind, base) in [(DayKind::Weekday, 35.0), (DayKind::Holiday, 30.0)] {
                m.insert(
                    (kind, roi),
                    DayModel {
                        kind,
                        roi,
                        coefficients: [base + roi.id() as f64, 3.0, -8.0, 6.0, 1.0, -2.0],
                        mu_e: 0.0,
                        sigma_e: sigma,
                        t_reg_mean: base,
                        ambient_range: 10.0,
                    },
                );
            }
        }
        m
    }

    fn ambient(days: i64) -> Vec<AmbientDay> {
        let d0 = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        (0..days).map(|i| AmbientDay::new(d0 + Duration::days(i), 15.0 + (i % 5) as f64, 5.0 - (i % 3) as f64).unwrap()).collect()
    }

    fn cfg(days: u32, n: usize) -> SynthConfig {
        SynthConfig { days, anomaly_count: Some(n), ..SynthConfig::default() }
    }

    #[test]
    fn noiseless_week_is_shifted_profile() {
        let c = cfg(7, 0);
        let m = models(0.0);
        let amb = ambient(7);
        let y = synth_year(&m, &amb, &[], &c, "cam", 1).unwrap();
        for (&roi, s) in &y.series {
            assert_eq!(s.len(), 7 * 288);
            for (i, &(t, v)) in s.samples().iter().enumerate() {
                let day = i / 288;
                let kind = DayKind::of(t.date(), &[]);
                let model = &m[&(kind, roi)];
                let gamma = radiative_offset(model.t_reg_mean, amb[day].mean(), &c.radiative);
                let tau = tau_of((i % 288) as u32 * 5);
                assert!((v - model.eval(tau) - gamma).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seeded_and_complete() {
        let c = cfg(30, 5);
        let amb = ambient(30);
        let m = models(0.4);
        let s1 = make_schedule(&c, 9).unwrap();
        let s2 = make_schedule(&c, 9).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 5);
        let first_allowed = c.start + Duration::days(c.warmup_days as i64);
        assert!(s1.iter().all(|a| a.date >= first_allowed));
        assert!(s1.windows(2).all(|w| w[0].date < w[1].date));
        assert!(s1.iter().all(|a| a.start >= 360 && a.start <= 1080 && a.start % 5 == 0));
        let a = synth_year(&m, &amb, &s1, &c, "cam", 9).unwrap();
        let b = synth_year(&m, &amb, &s1, &c, "cam", 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ground_truth.len(), 5);
        assert_ne!(a.series, synth_year(&m, &amb, &s1, &c, "cam", 10).unwrap().series);
    }

    #[test]
    fn day_noise_does_not_depend_on_span() {
        let m = models(0.4);
        let amb = ambient(10);
        let long = synth_year(&m, &amb, &[], &cfg(10, 0), "cam", 3).unwrap();
        let late = SynthConfig { start: amb[6].date, days: 2, ..cfg(2, 0) };
        let short = synth_year(&m, &amb, &[], &late, "cam", 3).unwrap();
        let s = &long.series[&Roi::Body].samples()[6 * 288..8 * 288];
        assert_eq!(s, short.series[&Roi::Body].samples());
    }

    #[test]
    fn default_count_scales_with_span() {
        assert_eq!(SynthConfig::default().anomaly_total(), 12);
        assert_eq!(cfg(60, 6).anomaly_total(), 6);
        assert_eq!(SynthConfig { days: 60, ..SynthConfig::default() }.anomaly_total(), 2);
        assert!(make_schedule(&cfg(5, 3), 1).is_err());
    }

    #[test]
    fn missing_ambient_is_reported() {
        let e = synth_year(&models(0.0), &ambient(3), &[], &cfg(7, 0), "cam", 1).unwrap_err();
        assert!(matches!(e, SynthError::MissingAmbient(_)));
    }
}

//! Localized overheating: the lumped heat balance
//! `m c_p dT/dt = U A (T_a - T) + eps sigma A (T_a^4 - T^4) + beta Q`,
//! integrated in kelvin with `T_a` the undisturbed series.

use serde::{Deserialize, Serialize};

use crate::extraction::TemperatureSeries;
use crate::roi::Roi;
use crate::scalar::{Scalar, KELVIN_OFFSET, STEFAN_BOLTZMANN};
use crate::time::{minutes_between, Timestamp};

use super::SynthError;

/// The heater stops once it is this close to the baseline (°C).
pub const COOL_DOWN_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Rk4,
    /// Explicit Euler, for cross-checking.
    Euler,
}

/// Physical constants of the heated region; window and power are per event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeaterConfig {
    /// kg
    pub m: f64,
    /// J/(kg K)
    pub c_p: f64,
    /// W/(m^2 K)
    pub u: f64,
    /// m^2
    pub a: f64,
    pub emissivity: f64,
    pub sigma_sb: f64,
    pub beta: f64,
}

impl Default for HeaterConfig {
    fn default() -> Self {
        HeaterConfig { m: 10.0, c_p: 450.0, u: 10.0, a: 1.0, emissivity: 0.9, sigma_sb: STEFAN_BOLTZMANN, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeaterParams {
    pub physics: HeaterConfig,
    /// Heater output, W.
    pub q: f64,
    pub on_window: (Timestamp, Timestamp),
}

impl HeaterParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let p = &self.physics;
        let ok = p.m > 0.0 && p.c_p > 0.0 && p.a > 0.0 && p.u >= 0.0 && self.q >= 0.0 && self.on_window.1 > self.on_window.0;
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidHeater(format!("{self:?}")))
        }
    }

    /// Seconds the heater is on.
    pub fn on_seconds(&self) -> f64 {
        minutes_between(self.on_window.0, self.on_window.1) * 60.0
    }
}

/// Right-hand side `dT/dt` in K/s.
fn rate<T: Scalar>(p: &HeaterConfig, q: T, ta: T, t: T) -> T {
    let ua = T::of(p.u * p.a);
    let rad = T::of(p.emissivity * p.sigma_sb * p.a);
    let cap = T::of(p.m * p.c_p);
    (ua * (ta - t) + rad * (ta.powi(4) - t.powi(4)) + T::of(p.beta) * q) / cap
}

/// Advances `t` (kelvin) by `h` seconds from time `s` (seconds).
fn step<T: Scalar>(
    method: Integrator,
    p: &HeaterConfig,
    q: T,
    ambient: &impl Fn(f64) -> T,
    s: f64,
    h: f64,
    t: T,
) -> T {
    let hh = T::of(h);
    match method {
        Integrator::Euler => t + hh * rate(p, q, ambient(s), t),
        Integrator::Rk4 => {
            let two = T::of(2.0);
            let half = T::of(h / 2.0);
            let k1 = rate(p, q, ambient(s), t);
            let k2 = rate(p, q, ambient(s + h / 2.0), t + half * k1);
            let k3 = rate(p, q, ambient(s + h / 2.0), t + half * k2);
            let k4 = rate(p, q, ambient(s + h), t + hh * k3);
            t + hh / T::of(6.0) * (k1 + two * k2 + two * k3 + k4)
        }
    }
}

/// Integrates from `s0` to `s1` seconds with steps of at most `dt`, the
/// heater on while `s < q_off`. Temperatures in kelvin.
#[allow(clippy::too_many_arguments)]
pub fn integrate<T: Scalar>(
    p: &HeaterConfig,
    q: T,
    q_off: f64,
    ambient: &impl Fn(f64) -> T,
    s0: f64,
    s1: f64,
    dt: f64,
    method: Integrator,
    mut t: T,
) -> Result<T, SynthError> {
    let mut s = s0;
    while s1 - s > 1e-9 {
        let mut h = dt.min(s1 - s);
        if s < q_off && s + h > q_off {
            h = q_off - s;
        }
        let q_now = if s < q_off { q } else { T::zero() };
        t = step(method, p, q_now, ambient, s, h, t);
        if !t.is_finite() || t <= T::zero() {
            return Err(SynthError::NonFiniteState { seconds: s + h });
        }
        s += h;
    }
    Ok(t)
}

/// One injected anomaly as logged for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub roi: Roi,
    #[serde(with = "crate::time::serde_ts")]
    pub start: Timestamp,
    /// Last modified sample (end of cool-down).
    #[serde(with = "crate::time::serde_ts")]
    pub end: Timestamp,
    /// Largest `T - T_a` over the modified samples, °C.
    pub peak_deviation: f64,
    pub q: f64,
}

/// Overlays a heating pulse on `series`, returning the modified copy.
///
/// The heater starts at the sample at `on_window.0`, runs until
/// `on_window.1`, and the region then cools until it is within
/// [`COOL_DOWN_TOLERANCE`] of the baseline (or the series ends).
pub fn inject_anomaly<T: Scalar>(
    series: &TemperatureSeries<T>,
    heater: &HeaterParams,
    dt: f64,
    method: Integrator,
) -> Result<(TemperatureSeries<T>, GroundTruthEntry), SynthError> {
    heater.validate()?;
    if !(dt > 0.0 && dt <= series.cadence as f64 * 60.0) {
        return Err(SynthError::InvalidHeater(format!("step {dt} s must be in (0, cadence]")));
    }
    let samples = series.samples();
    let (start, end) = heater.on_window;
    let i0 = samples
        .binary_search_by_key(&start, |s| s.0)
        .map_err(|_| SynthError::AnomalyOutsideSeries(start))?;
    let k = T::of(KELVIN_OFFSET);
    let secs: Vec<f64> = samples.iter().map(|s| minutes_between(start, s.0) * 60.0).collect();
    let ambient = |s: f64| -> T {
        let j = secs.partition_point(|&x| x <= s).clamp(1, secs.len() - 1);
        let (s0, s1) = (secs[j - 1], secs[j]);
        let (a, b) = (samples[j - 1].1, samples[j].1);
        let w = T::of(((s - s0) / (s1 - s0)).clamp(0.0, 1.0));
        a + (b - a) * w + k
    };
    let q_off = heater.on_seconds();
    let q = T::of(heater.q);
    let mut out: Vec<(Timestamp, T)> = samples.to_vec();
    let mut t = samples[i0].1 + k;
    let mut peak = T::zero();
    let mut last = start;
    for i in i0 + 1..samples.len() {
        t = integrate(&heater.physics, q, q_off, &ambient, secs[i - 1], secs[i], dt, method, t)?;
        let value = t - k;
        let dev = value - samples[i].1;
        out[i].1 = value;
        peak = peak.max(dev);
        last = samples[i].0;
        if samples[i].0 >= end && dev.abs() < T::of(COOL_DOWN_TOLERANCE) {
            break;
        }
    }
    let modified = TemperatureSeries::from_samples(series.camera.clone(), series.roi, series.cadence, out)
        .expect("timestamps unchanged");
    let entry = GroundTruthEntry { roi: series.roi, start, end: last, peak_deviation: peak.as_f64(), q: heater.q };
    Ok((modified, entry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{minutes, parse_ts};

    fn flat(v: f64, n: i64) -> TemperatureSeries<f64> {
        let t0 = parse_ts("2022-03-01 10:00:00").unwrap();
        TemperatureSeries::from_samples("c", Roi::Body, 5, (0..n).map(|i| (t0 + minutes(5 * i), v)).collect()).unwrap()
    }

    fn pulse(q: f64, start_min: i64, len_min: i64) -> HeaterParams {
        let t0 = parse_ts("2022-03-01 10:00:00").unwrap();
        HeaterParams {
            physics: HeaterConfig::default(),
            q,
            on_window: (t0 + minutes(start_min), t0 + minutes(start_min + len_min)),
        }
    }

    #[test]
    fn equilibrium_is_exact() {
        let s = flat(20.0, 288);
        let (m, gt) = inject_anomaly(&s, &pulse(0.0, 0, 30), 1.0, Integrator::Rk4).unwrap();
        assert_eq!(m, s);
        assert_eq!(gt.peak_deviation, 0.0);
    }

    #[test]
    fn equilibrium_drift_over_a_day() {
        let p = HeaterConfig::default();
        let ta: f64 = 293.15;
        let t: f64 = integrate(&p, 0.0, 0.0, &|_| ta, 0.0, 86_400.0, 1.0, Integrator::Rk4, ta).unwrap();
        assert!((t - ta).abs() < 1e-9);
    }

    #[test]
    fn linear_steady_state() {
        let p = HeaterConfig { emissivity: 0.0, u: 10.0, a: 1.0, beta: 1.0, ..HeaterConfig::default() };
        let ta: f64 = 290.0;
        // Time constant m c_p / (U A) = 450 s; 20 of them.
        let t: f64 = integrate(&p, 300.0, f64::INFINITY, &|_| ta, 0.0, 9000.0, 1.0, Integrator::Rk4, ta).unwrap();
        let excess = t - ta;
        assert!((excess - 30.0).abs() < 30.0 * 1e-3, "{excess}");
    }

    #[test]
    fn default_pulse_rises_and_decays() {
        let s = flat(25.0, 288);
        let (m, gt) = inject_anomaly(&s, &pulse(5000.0, 60, 30), 1.0, Integrator::Rk4).unwrap();
        assert!(gt.peak_deviation > 15.0);
        assert!(gt.end > gt.start + minutes(30));
        let last = m.value_at(gt.end).unwrap();
        assert!((last - 25.0).abs() < COOL_DOWN_TOLERANCE);
        let after = gt.end + minutes(5);
        assert_eq!(m.value_at(after), s.value_at(after));
        let before = gt.start - minutes(5);
        assert_eq!(m.value_at(before), s.value_at(before));
    }

    #[test]
    fn rk4_agrees_with_fine_euler() {
        let s = flat(25.0, 288);
        let h = pulse(5000.0, 60, 30);
        let (a, _) = inject_anomaly(&s, &h, 1.0, Integrator::Rk4).unwrap();
        let (b, _) = inject_anomaly(&s, &h, 0.1, Integrator::Euler).unwrap();
        let worst = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 0.1, "{worst}");
    }

    #[test]
    fn absurd_parameters_blow_up() {
        let s = flat(25.0, 50);
        let mut h = pulse(1e12, 0, 30);
        h.physics.m = 1e-6;
        assert!(matches!(inject_anomaly(&s, &h, 1.0, Integrator::Euler), Err(SynthError::NonFiniteState { .. })));
    }

    #[test]
    fn start_must_be_a_sample() {
        let s = flat(25.0, 50);
        assert!(matches!(
            inject_anomaly(&s, &pulse(100.0, 2, 30), 1.0, Integrator::Rk4),
            Err(SynthError::AnomalyOutsideSeries(_))
        ));
    }
}

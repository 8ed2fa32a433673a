//! Day models: a degree-5 profile per ROI plus residual statistics, and
//! their extrapolation to other days through the radiative offset.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::extraction::TemperatureSeries;
use crate::linalg::lstsq_qr;
use crate::roi::Roi;
use crate::scalar::{Scalar, KELVIN_OFFSET, STEFAN_BOLTZMANN};
use crate::time::{minute_of_day, minutes_between};

use super::aemet::AmbientDay;
use super::SynthError;

pub const POLY_DEGREE: usize = 5;
pub const DEFAULT_KAPPA: f64 = 2.0e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayKind {
    Weekday,
    Holiday,
}

impl DayKind {
    /// Saturdays, Sundays and listed dates are holidays.
    pub fn of(date: NaiveDate, extra_holidays: &[NaiveDate]) -> DayKind {
        match date.weekday() {
            Weekday::Sat | Weekday::Sun => DayKind::Holiday,
            _ if extra_holidays.contains(&date) => DayKind::Holiday,
            _ => DayKind::Weekday,
        }
    }
}

impl std::fmt::Display for DayKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DayKind::Weekday => "weekday",
            DayKind::Holiday => "holiday",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayModel<T> {
    pub kind: DayKind,
    pub roi: Roi,
    /// `a_0 ..= a_5` of `T_pol(tau)`, tau = minute of day / 1440.
    pub coefficients: [T; POLY_DEGREE + 1],
    pub mu_e: T,
    /// Sample standard deviation of the residuals.
    pub sigma_e: T,
    /// `(max + min) / 2` of the recorded curve.
    pub t_reg_mean: T,
    /// Ambient `T_max - T_min` on the recorded day.
    pub ambient_range: T,
}

impl<T: Scalar> DayModel<T> {
    pub fn eval(&self, tau: T) -> T {
        self.coefficients.iter().rev().fold(T::zero(), |acc, &a| acc * tau + a)
    }
}

/// Lumped radiative coefficient `kappa = alpha * eps * sigma` in K^-3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiativeParams {
    pub kappa: f64,
    /// Documentation only: camera reception coefficient.
    pub alpha: Option<f64>,
    /// Documentation only: emissivity.
    pub emissivity: Option<f64>,
    pub stefan_boltzmann: f64,
}

impl Default for RadiativeParams {
    fn default() -> Self {
        RadiativeParams { kappa: DEFAULT_KAPPA, alpha: None, emissivity: None, stefan_boltzmann: STEFAN_BOLTZMANN }
    }
}

pub fn tau_of(minute: u32) -> f64 {
    minute as f64 / 1440.0
}

/// Fits one [`DayModel`] per ROI to a recorded day.
///
/// Every series must cover one calendar day from midnight at its cadence
/// without gaps.
pub fn fit_model_day<T: Scalar>(
    recorded: &BTreeMap<Roi, TemperatureSeries<T>>,
    kind: DayKind,
    ambient_range: T,
) -> Result<Vec<DayModel<T>>, SynthError> {
    let mut out = Vec::with_capacity(recorded.len());
    for (&roi, series) in recorded {
        check_complete(series)?;
        let n = series.len();
        if n <= POLY_DEGREE {
            return Err(SynthError::DegenerateFit(format!("{roi}: {n} samples, need at least {}", POLY_DEGREE + 1)));
        }
        let cols = POLY_DEGREE + 1;
        let mut a = Vec::with_capacity(n * cols);
        for &(t, _) in series.samples() {
            let tau = T::of(tau_of(minute_of_day(t)));
            let mut x = T::one();
            for _ in 0..cols {
                a.push(x);
                x = x * tau;
            }
        }
        let b = series.values();
        let sol = lstsq_qr(&a, n, cols, &b).map_err(|e| SynthError::DegenerateFit(format!("{roi}: {e}")))?;
        let mut coefficients = [T::zero(); POLY_DEGREE + 1];
        coefficients.copy_from_slice(&sol);
        let mut model = DayModel {
            kind,
            roi,
            coefficients,
            mu_e: T::zero(),
            sigma_e: T::zero(),
            t_reg_mean: T::zero(),
            ambient_range,
        };
        let resid: Vec<T> = series
            .samples()
            .iter()
            .map(|&(t, v)| v - model.eval(T::of(tau_of(minute_of_day(t)))))
            .collect();
        let nn = T::of_usize(n);
        let mu = resid.iter().copied().sum::<T>() / nn;
        let var = resid.iter().map(|&e| (e - mu) * (e - mu)).sum::<T>() / T::of_usize(n - 1);
        let (lo, hi) = b.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        model.mu_e = mu;
        model.sigma_e = var.sqrt();
        model.t_reg_mean = (hi + lo) / T::of(2.0);
        out.push(model);
    }
    Ok(out)
}

fn check_complete<T: Scalar>(series: &TemperatureSeries<T>) -> Result<(), SynthError> {
    let incomplete = |why: String| Err(SynthError::IncompleteDay(format!("{}: {why}", series.roi)));
    let cadence = series.cadence;
    if cadence == 0 || 1440 % cadence != 0 {
        return incomplete(format!("cadence {cadence} does not divide a day"));
    }
    let expected = (1440 / cadence) as usize;
    let Some((first, _)) = series.first() else {
        return incomplete("no samples".into());
    };
    if minute_of_day(first) != 0 || series.len() != expected {
        return incomplete(format!("{} samples from {}, expected {expected} from midnight", series.len(), first));
    }
    let steps_ok = series.samples().windows(2).all(|w| minutes_between(w[0].0, w[1].0) == cadence as f64);
    if !steps_ok {
        return incomplete("irregular sampling".into());
    }
    Ok(())
}

/// `kappa * [(T_reg + 273.15)^4 - (T_day + 273.15)^4]`, in kelvin.
pub fn radiative_offset<T: Scalar>(t_reg_mean: T, t_day_mean: T, params: &RadiativeParams) -> T {
    let k = T::of(KELVIN_OFFSET);
    let a = t_reg_mean + k;
    let b = t_day_mean + k;
    T::of(params.kappa) * (a.powi(4) - b.powi(4))
}

/// Residual distribution for a given day: same mean, spread scaled by the
/// ratio of ambient ranges (clamped to `[0.5, 2]`).
pub fn day_noise<T: Scalar>(model: &DayModel<T>, ambient: &AmbientDay) -> (T, T) {
    let ratio = if model.ambient_range > T::zero() {
        (T::of(ambient.range()) / model.ambient_range).max(T::of(0.5)).min(T::of(2.0))
    } else {
        T::one()
    };
    (model.mu_e, model.sigma_e * ratio)
}

/// Values of one synthetic day at `cadence` minutes starting at midnight.
pub fn synth_day<T: Scalar, R: Rng + ?Sized>(
    model: &DayModel<T>,
    ambient: &AmbientDay,
    params: &RadiativeParams,
    cadence: u32,
    rng: &mut R,
) -> Vec<T> {
    let gamma = radiative_offset(model.t_reg_mean, T::of(ambient.mean()), params);
    let (mu, sigma) = day_noise(model, ambient);
    let normal = Normal::new(mu.as_f64(), sigma.as_f64()).ok();
    let k = T::of(KELVIN_OFFSET);
    (0..1440 / cadence)
        .map(|i| {
            let t_pol = model.eval(T::of(tau_of(i * cadence)));
            let e = match &normal {
                Some(n) if sigma > T::zero() => T::of(n.sample(rng)),
                _ => mu,
            };
            e + ((t_pol + k) + gamma) - k
        })
        .collect()
}

//! Autoregressive model `y_t = c + sum_i phi_i y_{t-i}` and its fit.

use serde::{Deserialize, Serialize};

use crate::extraction::TemperatureSeries;
use crate::linalg::cholesky_solve;
use crate::roi::Roi;
use crate::scalar::Scalar;
use crate::time::{minutes, minutes_between, Timestamp};

use super::ForecastError;

/// Ridge weight added to the lag coefficients' normal equations.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Fewest training rows beyond the lag span.
pub const MIN_EXTRA_ROWS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel<T> {
    pub intercept: T,
    /// `phi_1 ..= phi_p`; `phi_1` weighs the most recent sample.
    pub coefficients: Vec<T>,
    #[serde(with = "crate::time::serde_ts")]
    pub trained_at: Timestamp,
    /// Sampling interval the lags refer to, in minutes.
    pub cadence: u32,
}

impl<T: Scalar> ArModel<T> {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Minutes spanned by the lags.
    pub fn lag_span(&self) -> u32 {
        self.order() as u32 * self.cadence
    }

    /// One-step prediction from `lags` ordered oldest to newest.
    pub fn predict_next(&self, lags: &[T]) -> T {
        let p = self.order();
        debug_assert!(lags.len() >= p);
        let recent = &lags[lags.len() - p..];
        self.coefficients
            .iter()
            .zip(recent.iter().rev())
            .fold(self.intercept, |acc, (&phi, &y)| acc + phi * y)
    }

    /// One-step residuals over a series (targets from index `p` on).
    pub fn residuals(&self, values: &[T]) -> Vec<T> {
        let p = self.order();
        (p..values.len()).map(|t| values[t] - self.predict_next(&values[..t])).collect()
    }
}

/// Minimum number of samples [`fit`] accepts for order `p`.
pub fn min_history(p: usize) -> usize {
    p + (2 * p).max(MIN_EXTRA_ROWS)
}

/// Least-squares fit of an AR(`p`) model with an unpenalised intercept and
/// ridge `ridge` on the lag coefficients.
///
/// The normal equations are assembled on mean-centred data. Their lag
/// cross-products share all but two terms along each diagonal, so the
/// Gram matrix is built in `O(p * n + p^2)` rather than `O(p^2 * n)`.
pub fn fit<T: Scalar>(history: &TemperatureSeries<T>, p: usize, ridge: f64) -> Result<ArModel<T>, ForecastError> {
    if p == 0 {
        return Err(ForecastError::InvalidConfig("model order must be at least 1".into()));
    }
    let n = history.len();
    let need = min_history(p);
    if n < need {
        return Err(ForecastError::InsufficientHistory { have: n, need });
    }
    if let Some(&i) = history.gaps().first() {
        return Err(ForecastError::GapInTrainingWindow(history.samples()[i - 1].0, history.samples()[i].0));
    }
    let raw = history.values();
    let mean = raw.iter().copied().sum::<T>() / T::of_usize(n);
    let y: Vec<T> = raw.iter().map(|&v| v - mean).collect();
    let rows = n - p;
    let rows_t = T::of_usize(rows);

    // sums[i] = sum_{t=p}^{n-1} y[t-i], i = 0..=p
    let mut sums = vec![T::zero(); p + 1];
    sums[0] = y[p..].iter().copied().sum();
    for i in 1..=p {
        sums[i] = sums[i - 1] + y[p - i] - y[n - i];
    }
    // cross[i][j] = sum_t y[t-i] y[t-j]; row 0 directly, the rest by diagonal recurrence
    let dim = p + 1;
    let mut cross = vec![T::zero(); dim * dim];
    for j in 0..=p {
        cross[j] = (p..n).map(|t| y[t] * y[t - j]).sum();
    }
    for i in 1..=p {
        for j in i..=p {
            let prev = cross[(i - 1) * dim + (j - 1)];
            cross[i * dim + j] = prev + y[p - i] * y[p - j] - y[n - i] * y[n - j];
        }
    }

    let col_mean: Vec<T> = sums.iter().map(|&s| s / rows_t).collect();
    let mut gram = vec![T::zero(); p * p];
    for i in 1..=p {
        for j in i..=p {
            let g = cross[i * dim + j] - rows_t * col_mean[i] * col_mean[j];
            gram[(i - 1) * p + (j - 1)] = g;
            gram[(j - 1) * p + (i - 1)] = g;
        }
    }
    let ridge = T::of(ridge);
    for i in 0..p {
        gram[i * p + i] = gram[i * p + i] + ridge;
    }
    let mut phi: Vec<T> = (1..=p).map(|j| cross[j] - rows_t * col_mean[0] * col_mean[j]).collect();
    cholesky_solve(&mut gram, p, &mut phi).map_err(|_| ForecastError::SingularSystem)?;
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::SingularSystem);
    }

    let centred_c = col_mean[0] - phi.iter().zip(&col_mean[1..]).fold(T::zero(), |s, (&a, &m)| s + a * m);
    let phi_sum = phi.iter().copied().sum::<T>();
    let intercept = centred_c + mean * (T::one() - phi_sum);
    let last = history.last().expect("non-empty history").0;
    Ok(ArModel { intercept, coefficients: phi, trained_at: last + minutes(history.cadence as i64), cadence: history.cadence })
}

/// Point forecasts for one ROI at the model cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionWindow<T> {
    pub roi: Roi,
    #[serde(with = "crate::time::serde_ts")]
    pub start: Timestamp,
    pub cadence: u32,
    /// Covered span in minutes.
    pub horizon: u32,
    pub values: Vec<T>,
}

impl<T: Scalar> PredictionWindow<T> {
    pub fn end(&self) -> Timestamp {
        self.start + minutes(self.horizon as i64)
    }

    pub fn timestamp_of(&self, slot: usize) -> Timestamp {
        self.start + minutes(slot as i64 * self.cadence as i64)
    }

    /// Value of the slot containing `t` (floored to the cadence).
    pub fn at(&self, t: Timestamp) -> Option<T> {
        if t < self.start || t >= self.end() {
            return None;
        }
        let slot = (minutes_between(self.start, t) / self.cadence as f64).floor() as usize;
        self.values.get(slot).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Timestamp, T)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.timestamp_of(i), v))
    }
}

/// Recursive multi-step forecast over `[start, start + horizon)`, feeding
/// each prediction back as a lag. `seed` holds the last `p` samples before
/// `start`, oldest first.
pub fn predict_window<T: Scalar>(
    model: &ArModel<T>,
    roi: Roi,
    seed: &[(Timestamp, T)],
    start: Timestamp,
    horizon: u32,
) -> Result<PredictionWindow<T>, ForecastError> {
    let p = model.order();
    let step = minutes(model.cadence as i64);
    if seed.len() != p {
        return Err(ForecastError::BadSeed(format!("{} samples for order {p}", seed.len())));
    }
    if seed.windows(2).any(|w| w[1].0 - w[0].0 != step) {
        return Err(ForecastError::BadSeed("seed is not contiguous at the model cadence".into()));
    }
    if seed[p - 1].0 + step != start {
        return Err(ForecastError::BadSeed("seed does not end one cadence before the window".into()));
    }
    let steps = (horizon / model.cadence) as usize;
    let mut buf: Vec<T> = Vec::with_capacity(p + steps);
    buf.extend(seed.iter().map(|s| s.1));
    for _ in 0..steps {
        let next = model.predict_next(&buf);
        buf.push(next);
    }
    Ok(PredictionWindow {
        roi,
        start,
        cadence: model.cadence,
        horizon: steps as u32 * model.cadence,
        values: buf.split_off(p),
    })
}

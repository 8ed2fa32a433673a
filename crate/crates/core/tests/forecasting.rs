use chrono::NaiveDate;
use thermowatch::extraction::TemperatureSeries;
use thermowatch::forecasting::{fit, predict_window, DEFAULT_RIDGE};
use thermowatch::roi::Roi;
use thermowatch::time::{minutes, Timestamp};

fn t0() -> Timestamp {
    NaiveDate::from_ymd_opt(2022, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn daily_sine(minute: f64) -> f64 {
    22.0 + 6.0 * (2.0 * std::f64::consts::PI * minute / 1440.0).sin() + 2.0 * (4.0 * std::f64::consts::PI * minute / 1440.0 + 0.7).cos()
}

fn sampled(cadence: u32, n: usize, f: impl Fn(f64) -> f64) -> TemperatureSeries<f64> {
    let samples = (0..n).map(|i| (t0() + minutes((i as u32 * cadence) as i64), f((i as u32 * cadence) as f64))).collect();
    TemperatureSeries::from_samples("cam", Roi::In1, cadence, samples).unwrap()
}

#[test]
fn full_period_lags_reproduce_a_daily_sinusoid() {
    for cadence in [60u32, 5] {
        let p = (1440 / cadence) as usize;
        let n = thermowatch::forecasting::min_history(p) + p;
        let s = sampled(cadence, n, daily_sine);
        let m = fit(&s, p, DEFAULT_RIDGE).unwrap();
        let r = m.residuals(&s.values());
        let worst = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(worst < 1e-6, "cadence {cadence}: worst one-step residual {worst}");

        let seed = &s.samples()[n - p..];
        let start = seed[p - 1].0 + minutes(cadence as i64);
        let w = predict_window(&m, Roi::In1, seed, start, 720).unwrap();
        assert_eq!(w.values.len(), (720 / cadence) as usize);
        let worst = w
            .iter()
            .map(|(ts, v)| (v - daily_sine((ts - t0()).num_minutes() as f64)).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-3, "cadence {cadence}: worst 12 h error {worst}");
    }
}

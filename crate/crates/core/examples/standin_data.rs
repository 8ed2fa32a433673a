//! Regenerates the bundled stand-in data files in `crates/core/data`.
//!
//! cargo run -p thermowatch --example standin_data

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thermowatch::roi::Roi;

/// Load profile in [0, 1]: night trough, morning shoulder, evening peak.
fn load(h: f64, holiday: bool) -> f64 {
    let bump = |c: f64, w: f64| (-((h - c) / w).powi(2)).exp();
    let evening = if holiday { 0.29 } else { 0.3 };
    let morning = if holiday { 0.13 } else { 0.16 };
    let night = bump(4.0, 2.5) + bump(28.0, 2.5) + bump(-20.0, 2.5);
    let peak = bump(20.5, 2.6) + bump(-3.5, 2.6);
    0.5 + evening * peak + morning * bump(9.5, 2.2) - 0.15 * night
}

fn sun(h: f64) -> f64 {
    if (7.0..19.0).contains(&h) {
        (PI * (h - 7.0) / 12.0).sin()
    } else {
        0.0
    }
}

/// Least-squares degree-5 projection of `f` over the day, with matching
/// value and slope at both midnights so consecutive days join smoothly.
fn periodic_quintic(f: impl Fn(f64) -> f64) -> [f64; 6] {
    let n = 288;
    let w = 1e4;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        let x = i as f64 / n as f64;
        a.extend((0..6).map(|k| x.powi(k)));
        b.push(f(x * 24.0));
    }
    // p(1) - p(0) = 0 and p'(1) - p'(0) = 0.
    a.extend((0..6).map(|k| w * if k == 0 { 0.0 } else { 1.0 }));
    b.push(0.0);
    a.extend((0..6).map(|k| w * if k <= 1 { 0.0 } else { k as f64 }));
    b.push(0.0);
    let c = thermowatch::linalg::lstsq_qr(&a, n + 2, 6, &b).unwrap();
    [c[0], c[1], c[2], c[3], c[4], c[5]]
}

fn model_day(path: &Path, date: NaiveDate, tmax: f64, tmin: f64, holiday: bool, seed: u64) {
    // (load gain, solar gain, noise sd) per ROI.
    let params: [(Roi, f64, f64, f64); 9] = [
        (Roi::In1, 18.0, 4.0, 0.35),
        (Roi::In2, 20.0, 4.0, 0.35),
        (Roi::In3, 17.0, 4.0, 0.35),
        (Roi::Out1, 13.0, 3.0, 0.3),
        (Roi::Out2, 14.0, 3.0, 0.3),
        (Roi::Out3, 12.0, 3.0, 0.3),
        (Roi::Out4, 12.5, 3.0, 0.3),
        (Roi::Body, 15.0, 5.0, 0.3),
        (Roi::Background, 0.0, 6.0, 0.4),
    ];
    let scale = if holiday { 0.98 } else { 1.0 };
    let ambient = |h: f64| (tmax + tmin) / 2.0 + (tmax - tmin) / 2.0 * (2.0 * PI * (h - 15.0) / 24.0).cos();
    let curves: Vec<[f64; 6]> = params
        .iter()
        .map(|&(_, kl, ks, _)| periodic_quintic(|h| ambient(h) + scale * kl * load(h, holiday) + ks * sun(h)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::new();
    let _ = writeln!(s, "# Generated stand-in for the recorded model day {date}; not camera data.");
    let _ = writeln!(s, "# Ambient {tmin} to {tmax} degC; regenerate with the standin_data example.");
    s.push_str("timestamp");
    for (roi, ..) in &params {
        let _ = write!(s, ",{roi}");
    }
    s.push('\n');
    for i in 0..288 {
        let x = i as f64 / 288.0;
        let _ = write!(s, "{} {:02}:{:02}:00", date, i * 5 / 60, i * 5 % 60);
        for (&(_, _, _, sd), c) in params.iter().zip(&curves) {
            let noise = Normal::new(0.0, sd).unwrap().sample(&mut rng);
            let v = c.iter().rev().fold(0.0, |acc, &a| acc * x + a) + noise;
            let _ = write!(s, ",{:.2}", v);
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

fn aemet(path: &Path, seed: u64) {
    let table: [(u32, u32, f64, f64); 9] = [
        (1, 1, 20.9, 0.5),
        (1, 2, 20.6, -0.4),
        (1, 3, 20.4, -1.3),
        (5, 3, 19.0, 9.4),
        (5, 4, 17.2, 8.5),
        (5, 5, 24.0, 7.8),
        (9, 2, 33.1, 18.4),
        (9, 3, 32.5, 16.9),
        (9, 4, 33.2, 11.8),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shock = Normal::new(0.0, 1.0).unwrap();
    let (mut m_dev, mut r_dev) = (0.0f64, 0.0f64);
    let mut s = String::from("# Generated stand-in for the 2022 AEMET daily series; the rows shown in\n");
    s.push_str("# the published table are copied verbatim, all other days are synthetic.\n");
    s.push_str("date,tmax,tmin\n");
    let d0 = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
    for d in 0..365 {
        let date = d0 + Duration::days(d);
        let phase = 2.0 * PI * (d as f64 - 15.0) / 365.0;
        m_dev = 0.7 * m_dev + 1.4 * shock.sample(&mut rng);
        r_dev = 0.5 * r_dev + 1.5 * shock.sample(&mut rng);
        let mean = 17.5 - 7.0 * phase.cos() + m_dev;
        let range = (13.5 + 2.5 * phase.cos().abs() + r_dev).max(3.0);
        let (mut tmax, mut tmin) = (mean + range / 2.0, mean - range / 2.0);
        if let Some(&(_, _, x, n)) = table.iter().find(|&&(mo, da, ..)| NaiveDate::from_ymd_opt(2022, mo, da) == Some(date)) {
            tmax = x;
            tmin = n;
        }
        let _ = writeln!(s, "{},{:.1},{:.1}", date.format("%-d-%b-%Y"), tmax, tmin);
    }
    std::fs::write(path, s).unwrap();
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    model_day(&dir.join("model_day_2023-10-18.csv"), NaiveDate::from_ymd_opt(2023, 10, 18).unwrap(), 26.0, 14.0, false, 18);
    model_day(&dir.join("model_day_2023-10-29.csv"), NaiveDate::from_ymd_opt(2023, 10, 29).unwrap(), 25.5, 14.0, true, 29);
    aemet(&dir.join("aemet_2022.csv"), 2022);
}

//! Synthetic operating-temperature data: model-day fits, yearly
//! extrapolation from daily ambient temperatures, heating anomalies and
//! frame rendering.

mod aemet;
mod dataset;
mod daymodel;
mod heater;
mod render;
mod year;

use std::path::Path;

use chrono::NaiveDate;

pub use aemet::{load_aemet, parse_aemet, parse_date, AmbientDay};
pub use dataset::{
    format_ground_truth, format_schedule, parse_ground_truth, parse_model_day, parse_schedule, read_dataset,
    read_series_csv, write_dataset, write_series_csv, Dataset, Manifest, FRAMES_DIR, GROUND_TRUTH_FILE, MANIFEST_FILE,
    MASK_FILE, SCHEDULE_FILE, SERIES_DIR,
};
pub use daymodel::{
    day_noise, fit_model_day, radiative_offset, synth_day, tau_of, DayKind, DayModel, RadiativeParams, DEFAULT_KAPPA,
    POLY_DEGREE,
};
pub use heater::{
    inject_anomaly, integrate, GroundTruthEntry, HeaterConfig, HeaterParams, Integrator, COOL_DOWN_TOLERANCE,
};
pub use render::render_frame;
pub use year::{day_stream, make_schedule, sample_at, stream_rng, synth_year, AnomalySpec, ModelSet, SynthConfig, SyntheticYear};

use crate::roi::Roi;
use crate::scalar::Scalar;
use crate::time::Timestamp;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("incomplete model day: {0}")]
    IncompleteDay(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("no ambient data for {0}")]
    MissingAmbient(NaiveDate),
    #[error("no {0} model for {1}")]
    MissingModel(DayKind, Roi),
    #[error("no value for {0}")]
    MissingRoiValue(Roi),
    #[error("heater state diverged after {seconds} s")]
    NonFiniteState { seconds: f64 },
    #[error("invalid heater: {0}")]
    InvalidHeater(String),
    #[error("anomaly start {0} is not a sample of the series")]
    AnomalyOutsideSeries(Timestamp),
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Imaging(#[from] crate::imaging::ImagingError),
    #[error("{0}: {1}")]
    Context(String, Box<SynthError>),
}

/// Generated stand-in for the weekday model day (2023-10-18).
pub const BUNDLED_WEEKDAY: &str = include_str!("../../data/model_day_2023-10-18.csv");
/// Generated stand-in for the holiday model day (2023-10-29).
pub const BUNDLED_HOLIDAY: &str = include_str!("../../data/model_day_2023-10-29.csv");
/// Generated stand-in daily ambient series for 2022.
pub const BUNDLED_AEMET: &str = include_str!("../../data/aemet_2022.csv");

fn read_text(path: Option<&Path>, bundled: &'static str) -> Result<String, SynthError> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| SynthError::Io(format!("{}: {e}", p.display()))),
        None => Ok(bundled.to_string()),
    }
}

/// Fits both day kinds from the configured (or bundled) model days.
pub fn load_models<T: Scalar>(cfg: &SynthConfig) -> Result<ModelSet<T>, SynthError> {
    let mut set = ModelSet::new();
    let sources = [
        (DayKind::Weekday, cfg.weekday_model.as_deref(), BUNDLED_WEEKDAY, cfg.weekday_ambient_range),
        (DayKind::Holiday, cfg.holiday_model.as_deref(), BUNDLED_HOLIDAY, cfg.holiday_ambient_range),
    ];
    for (kind, path, bundled, range) in sources {
        let text = read_text(path, bundled)?;
        let recorded = parse_model_day::<T>(&text, "model")?;
        for m in fit_model_day(&recorded, kind, T::of(range))? {
            set.insert((kind, m.roi), m);
        }
    }
    Ok(set)
}

/// Ambient days from the configured (or bundled) file.
pub fn load_ambient(cfg: &SynthConfig) -> Result<Vec<AmbientDay>, SynthError> {
    match cfg.aemet.as_deref() {
        Some(p) => load_aemet(p),
        None => parse_aemet(BUNDLED_AEMET),
    }
}

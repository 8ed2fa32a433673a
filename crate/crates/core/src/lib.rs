//! Thermal anomaly detection for power transformers.
//!
//! Frames are segmented (fixed ROI masks plus multiclass Otsu and MSER),
//! reduced to one temperature per ROI, forecast with periodically refitted
//! AR models and compared against the forecast with a fixed margin.
//! [`synthgen`] produces synthetic years to exercise the whole loop.

pub mod alarmeval;
pub mod config;
pub mod extraction;
pub mod forecasting;
pub mod imaging;
pub mod linalg;
pub mod pipeline;
pub mod roi;
pub mod scalar;
pub mod store;
pub mod synthgen;
pub mod time;

pub use roi::Roi;
pub use scalar::Scalar;
pub use time::Timestamp;

pub type Frame = imaging::ThermalFrame<f64>;
pub type Sample = extraction::TemperatureSample<f64>;
pub type Series = extraction::TemperatureSeries<f64>;
pub type ArModel64 = forecasting::ArModel<f64>;
pub type Forecaster = forecasting::ForecasterState<f64>;
pub type DayModel64 = synthgen::DayModel<f64>;
pub type Year = synthgen::SyntheticYear<f64>;

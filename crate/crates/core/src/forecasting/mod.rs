//! Adaptive autoregressive forecasting of ROI temperatures.

mod model;
mod state;

pub use model::{fit, min_history, predict_window, ArModel, PredictionWindow, DEFAULT_RIDGE, MIN_EXTRA_ROWS};
pub use state::{regularize, ForecastConfig, ForecasterState, HistorySource, RetrainOutcome};

use crate::roi::Roi;
use crate::time::Timestamp;

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("insufficient history: {have} samples, {need} required")]
    InsufficientHistory { have: usize, need: usize },
    #[error("gap in training window between {0} and {1}")]
    GapInTrainingWindow(Timestamp, Timestamp),
    #[error("normal equations are singular even with ridge")]
    SingularSystem,
    #[error("bad seed: {0}")]
    BadSeed(String),
    #[error("no prediction for {0} at {1}")]
    NoPrediction(Roi, Timestamp),
    #[error("invalid forecast configuration: {0}")]
    InvalidConfig(String),
    #[error("history unavailable: {0}")]
    History(String),
}

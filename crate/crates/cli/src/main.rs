//! `thermowatch` command-line harness.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error (malformed or
//! inconsistent inputs, failed checks), 4 I/O error.

mod commands;
mod metrics;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "thermowatch", version, about = "Thermal anomaly detection: synthetic data, simulation, segmentation and metrics")]
pub struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for synthetic generation.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset (series, ground truth, optional frames).
    Synth(SynthArgs),
    /// Replay a dataset through the pipeline and score it.
    Simulate(SimulateArgs),
    /// Segment a single frame file.
    Segment(SegmentArgs),
    /// Score an alarm log against ground truth.
    Metrics(MetricsArgs),
    /// Per-ROI CSV files for plotting.
    PlotData(PlotDataArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of days (overrides the config).
    #[arg(long, conflicts_with = "year")]
    pub days: Option<u32>,
    /// Generate the whole calendar year.
    #[arg(long)]
    pub year: Option<i32>,
    /// First day, YYYY-MM-DD.
    #[arg(long, conflicts_with = "year")]
    pub start: Option<String>,
    /// Exact number of anomalies instead of the yearly rate.
    #[arg(long)]
    pub anomalies: Option<usize>,
    /// Also render frame files (large).
    #[arg(long)]
    pub frames: bool,
    /// Ambient CSV replacing the configured one.
    #[arg(long)]
    pub aemet: Option<PathBuf>,
    /// Camera id (defaults to the first configured camera).
    #[arg(long)]
    pub camera: Option<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Dataset directory written by `synth`.
    pub dataset: PathBuf,
    /// Feed the series directly instead of frames.
    #[arg(long)]
    pub no_frames: bool,
    /// Alarm threshold in °C (overrides the config).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Minutes around an anomaly within which an alarm counts as a hit.
    #[arg(long, default_value_t = metrics::DEFAULT_MATCHING_WINDOW)]
    pub matching_window: u32,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Frame file (.tfr).
    pub frame: PathBuf,
    /// Number of Otsu classes (config default when omitted).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Number of gray levels (config default when omitted).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Fixed quantization interval `MIN:MAX` in °C instead of the frame range.
    #[arg(long, value_parser = parse_range)]
    pub range: Option<(f64, f64)>,
    /// Write the class label map as a PGM file.
    #[arg(long)]
    pub labelmap: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Alarm log: CSV from `simulate` or JSON lines from a store.
    #[arg(long)]
    pub alarms: PathBuf,
    /// Ground truth CSV from `synth`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Trace CSV from `simulate`, for deviations and evaluability.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value_t = metrics::DEFAULT_MATCHING_WINDOW)]
    pub window: u32,
    /// Threshold for the strong-anomaly subset; read from the log if omitted.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PlotDataArgs {
    /// A `simulate` output directory or a series store.
    pub input: PathBuf,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad MIN `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad MAX `{b}`"))?;
    if !(lo < hi) {
        return Err("MIN must be below MAX".into());
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

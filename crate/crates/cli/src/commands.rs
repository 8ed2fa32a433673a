use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thermowatch::alarmeval::{AlarmRecord, DEFAULT_THRESHOLD};
use thermowatch::config::{CameraConfig, Config, ConfigError};
use thermowatch::imaging::{
    default_scene_mask, mser_regions, otsu_multiclass, read_frame, write_frame, ImagingError, Quantization, RoiMaskSet,
};
use thermowatch::pipeline::{directory_frames, rendered_frames, series_samples, Input, Pipeline, PipelineError, RunSummary};
use thermowatch::store::{SeriesStore, StoreError};
use thermowatch::synthgen::{
    load_ambient, load_models, make_schedule, parse_ground_truth, read_dataset, render_frame, sample_at, synth_year,
    write_dataset, Manifest, SynthError, FRAMES_DIR, MASK_FILE,
};
use thermowatch::time::format_ts;
use thermowatch::Roi;

use crate::metrics::{
    evaluate_run, format_alarm_log, format_trace_row, parse_alarm_log, parse_trace, render_evaluation, trace_rows,
    Evaluation, TraceRow, TRACE_HEADER,
};
use crate::{Cli, Command, MetricsArgs, PlotDataArgs, SegmentArgs, SimulateArgs, SynthArgs, EXIT_DATA, EXIT_IO};

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const ALARMS_FILE: &str = "alarms.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const STORE_DIR: &str = "store";
pub const METRICS_FILE: &str = "metrics.json";
const PLOT_HEADER: &str = "timestamp,temperature,prediction,alarm";

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Segment(a) => segment(cli, a),
        Command::Metrics(a) => metrics(cli, a),
        Command::PlotData(a) => plot_data(cli, a),
    }
}

fn is_io(e: &(dyn std::error::Error + 'static)) -> bool {
    if e.is::<std::io::Error>() {
        return true;
    }
    if let Some(s) = e.downcast_ref::<SynthError>() {
        return match s {
            SynthError::Io(_) => true,
            SynthError::Imaging(i) => matches!(i, ImagingError::Io(_)),
            SynthError::Context(_, inner) => is_io(inner.as_ref()),
            _ => false,
        };
    }
    matches!(e.downcast_ref::<ImagingError>(), Some(ImagingError::Io(_)))
        || matches!(e.downcast_ref::<StoreError>(), Some(StoreError::Io { .. }))
        || matches!(e.downcast_ref::<ConfigError>(), Some(ConfigError::Io { .. }))
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(is_io) {
        EXIT_IO
    } else {
        EXIT_DATA
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

/// SHA-256 of the canonical TOML of the effective configuration.
pub fn config_digest(cfg: &Config) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

fn camera_or_default(cfg: &Config, id: Option<&str>) -> Result<CameraConfig> {
    match id {
        None => Ok(cfg.camera(None)?),
        Some(id) => Ok(cfg.camera(Some(id)).unwrap_or_else(|_| CameraConfig { id: id.to_string(), ..CameraConfig::default() })),
    }
}

fn load_masks(dataset_mask: Option<PathBuf>, cam: &CameraConfig) -> Result<RoiMaskSet> {
    match dataset_mask.or_else(|| cam.mask.clone()) {
        Some(p) => RoiMaskSet::load(&p).with_context(|| format!("loading mask {}", p.display())),
        None => Ok(default_scene_mask()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let s = &mut cfg.synth;
    if let Some(y) = args.year {
        let start = chrono::NaiveDate::from_ymd_opt(y, 1, 1).ok_or_else(|| anyhow!("bad year {y}"))?;
        let next = chrono::NaiveDate::from_ymd_opt(y + 1, 1, 1).ok_or_else(|| anyhow!("bad year {y}"))?;
        s.start = start;
        s.days = (next - start).num_days() as u32;
    }
    if let Some(d) = &args.start {
        s.start = d.parse().map_err(|_| anyhow!("bad --start `{d}`, expected YYYY-MM-DD"))?;
    }
    if let Some(d) = args.days {
        s.days = d;
    }
    if let Some(n) = args.anomalies {
        s.anomaly_count = Some(n);
    }
    if let Some(p) = &args.aemet {
        s.aemet = Some(p.clone());
    }
    cfg.validate()?;
    let cam = camera_or_default(&cfg, args.camera.as_deref())?;
    let digest = config_digest(&cfg);
    let sc = &cfg.synth;

    let models = load_models::<f64>(sc).context("resolving model days")?;
    let ambient = load_ambient(sc).context("resolving ambient temperatures")?;
    let schedule = make_schedule(sc, cli.seed)?;
    let year = synth_year(&models, &ambient, &schedule, sc, &cam.id, cli.seed)?;

    let out = &cli.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if args.frames {
        let dir = out.join(FRAMES_DIR);
        if dir.exists() {
            bail!("{} already exists; use a fresh --out", dir.display());
        }
        let masks = load_masks(None, &cam)?;
        masks.save(&out.join(MASK_FILE))?;
        let mut i = 0;
        while let Some((t, values)) = sample_at(&year, i) {
            write_frame(&render_frame(&values, &masks, t)?, &dir)?;
            i += 1;
        }
    }
    let manifest = Manifest {
        camera: cam.id.clone(),
        seed: cli.seed,
        config_digest: digest,
        cadence: sc.cadence,
        start: sc.start,
        days: sc.days,
        anomalies: year.schedule.len(),
        frames: args.frames,
        rois: year.series.keys().copied().collect(),
    };
    write_dataset(out, &year, &manifest)?;
    println!(
        "{} days from {} for {} ({} anomalies, seed {}) written to {}",
        sc.days,
        sc.start,
        cam.id,
        year.schedule.len(),
        cli.seed,
        out.display()
    );
    Ok(())
}

/// Everything in `report.json` except the runtime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub camera: String,
    pub seed: u64,
    pub config_digest: String,
    pub dataset_config_digest: String,
    pub start: String,
    pub days: u32,
    pub cadence: u32,
    pub threshold: f64,
    /// `frames` (files), `rendered` (in memory) or `series`.
    pub input: String,
    pub run: RunSummary,
    pub evaluation: Evaluation,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub body: ReportBody,
    pub runtime_seconds: f64,
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let started = Instant::now();
    let ds = read_dataset(&args.dataset).with_context(|| format!("reading dataset {}", args.dataset.display()))?;
    let mut cfg = load_config(cli)?;
    let mut cam = camera_or_default(&cfg, Some(&ds.manifest.camera))?;
    cam.cadence = ds.manifest.cadence;
    if let Some(t) = args.threshold {
        cam.threshold = t;
    }
    cfg.camera = vec![cam.clone()];
    cfg.validate()?;
    let digest = config_digest(&cfg);
    let masks = load_masks(ds.mask_path(), &cam)?;

    let out = &cli.out;
    let store_dir = out.join(STORE_DIR);
    if store_dir.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false) {
        bail!("{} already holds a store; use a fresh --out", store_dir.display());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut store = SeriesStore::open(&store_dir, cam.cadence)?;
    store.set_sync(cfg.store.sync);
    let mut pipeline = Pipeline::with_masks(&cfg, &cam, masks.clone(), &mut store)?;

    let mut trace: Vec<TraceRow> = Vec::new();
    let mut alarms: Vec<AlarmRecord> = Vec::new();
    let on_step = |r: &thermowatch::pipeline::PipelineStepResult| {
        if let Some(t) = &r.status {
            trace.extend(trace_rows(t));
        }
        alarms.extend(r.alarms.iter().cloned());
    };
    let (input, summary) = if args.no_frames {
        let inputs = series_samples(&ds.series).into_iter().map(|s| Ok::<_, PipelineError>(Input::Sample(s)));
        ("series", pipeline.run(&mut store, inputs, on_step)?)
    } else if let Some(dir) = ds.frames_dir() {
        ("frames", pipeline.run(&mut store, directory_frames(&dir)?, on_step)?)
    } else {
        ("rendered", pipeline.run(&mut store, rendered_frames(&ds.series, &masks), on_step)?)
    };
    log::info!("{}: {} steps, {} alarms", cam.id, summary.processed, summary.alarms);

    let evaluation = evaluate_run(&alarms, &ds.ground_truth, Some(&trace), args.matching_window, cam.threshold);
    let mut text = String::with_capacity(trace.len() * 56);
    text.push_str(TRACE_HEADER);
    text.push('\n');
    for r in &trace {
        format_trace_row(r, &mut text);
    }
    write(&out.join(TRACE_FILE), &text)?;
    write(&out.join(ALARMS_FILE), &format_alarm_log(&alarms, &evaluation))?;

    let body = ReportBody {
        camera: cam.id.clone(),
        seed: ds.manifest.seed,
        config_digest: digest,
        dataset_config_digest: ds.manifest.config_digest.clone(),
        start: ds.manifest.start.to_string(),
        days: ds.manifest.days,
        cadence: ds.manifest.cadence,
        threshold: cam.threshold,
        input: input.to_string(),
        run: summary,
        evaluation,
    };
    let report = Report { body, runtime_seconds: started.elapsed().as_secs_f64() };
    let json = serde_json::to_string_pretty(&report)?;
    write(&out.join(REPORT_FILE), &(json + "\n"))?;
    let summary = render_summary(&report);
    write(&out.join(SUMMARY_FILE), &summary)?;
    print!("{summary}");
    Ok(())
}

fn render_summary(r: &Report) -> String {
    let b = &r.body;
    let mut s = String::new();
    let _ = writeln!(s, "camera {} from {} ({} days, {} min cadence), input {}", b.camera, b.start, b.days, b.cadence, b.input);
    let _ = writeln!(s, "seed {} config {}", b.seed, b.config_digest);
    let _ = writeln!(
        s,
        "steps {} (skipped {}), retrains {}, alarms {}, threshold {} C",
        b.run.processed, b.run.skipped, b.run.retrains, b.run.alarms, b.threshold
    );
    for (stage, n) in &b.run.errors {
        let _ = writeln!(s, "  {n} {stage:?} errors");
    }
    s.push_str(&render_evaluation(&b.evaluation));
    let _ = writeln!(s, "runtime {:.2} s", r.runtime_seconds);
    s
}

fn segment(cli: &Cli, args: &SegmentArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let seg = &cfg.segmentation;
    let frame = read_frame::<f64>(&args.frame).with_context(|| format!("reading {}", args.frame.display()))?;
    let n_classes = args.classes.unwrap_or(seg.n_classes);
    let n_levels = args.levels.unwrap_or(seg.n_levels);
    let mode = match args.range {
        Some((min, max)) => Quantization::Fixed { min, max },
        None => seg.quantization,
    };
    let q = otsu_multiclass(&frame, n_classes, n_levels, mode)?;
    let regions = mser_regions(&frame, &q, &seg.mser);

    let mut s = String::new();
    let _ = writeln!(s, "frame {} {}x{}", format_ts(frame.timestamp()), frame.width(), frame.height());
    let _ = writeln!(s, "levels {} over [{}, {}], classes {}", q.n_levels, q.range.0, q.range.1, q.n_classes);
    let join = |v: Vec<String>| v.join(" ");
    let _ = writeln!(s, "thresholds {}", join(q.thresholds.iter().map(|k| k.to_string()).collect()));
    let _ = writeln!(s, "threshold temperatures {}", join(q.threshold_temperatures().iter().map(|t| format!("{t:.3}")).collect()));
    let _ = writeln!(s, "separability {:.6}", q.separability);
    let _ = writeln!(s, "class sizes {}", join(q.class_sizes().iter().map(|n| n.to_string()).collect()));
    let _ = writeln!(s, "regions {}", regions.len());
    let _ = writeln!(s, "class region pixels bbox(r0,c0,r1,c1)");
    for r in &regions {
        let (r0, c0, r1, c1) = r.bounding_box;
        let _ = writeln!(s, "{} {} {} {r0},{c0},{r1},{c1}", r.class_id, r.region_id, r.pixel_count);
    }
    print!("{s}");
    if let Some(p) = &args.labelmap {
        let mut pgm = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
        pgm.extend_from_slice(&q.labelmap);
        fs::write(p, pgm).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn metrics(cli: &Cli, args: &MetricsArgs) -> Result<()> {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let truth = parse_ground_truth(&read(&args.truth)?).with_context(|| format!("parsing {}", args.truth.display()))?;
    let alarms = parse_alarm_log(&read(&args.alarms)?, "").with_context(|| format!("parsing {}", args.alarms.display()))?;
    let trace = match &args.trace {
        Some(p) => Some(parse_trace(&read(p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    let threshold = args.threshold.or(alarms.first().map(|a| a.threshold)).unwrap_or(DEFAULT_THRESHOLD);
    let eval = evaluate_run(&alarms, &truth, trace.as_deref(), args.window, threshold);
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    write(&cli.out.join(METRICS_FILE), &(serde_json::to_string_pretty(&eval)? + "\n"))?;
    print!("{}", render_evaluation(&eval));
    Ok(())
}

type PlotRows = BTreeMap<Roi, Vec<(String, f64, Option<f64>, u8)>>;

fn plot_data(cli: &Cli, args: &PlotDataArgs) -> Result<()> {
    let input = &args.input;
    let mut per_camera: BTreeMap<String, PlotRows> = BTreeMap::new();
    if input.join(TRACE_FILE).is_file() {
        let p = input.join(TRACE_FILE);
        let trace = parse_trace(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?;
        let camera = match fs::read_to_string(input.join(REPORT_FILE)) {
            Ok(text) => serde_json::from_str::<Report>(&text).context("parsing report.json")?.body.camera,
            Err(_) => "camera".to_string(),
        };
        let rows = per_camera.entry(camera).or_default();
        for r in trace {
            rows.entry(r.roi).or_default().push((format_ts(r.timestamp), r.temperature, r.prediction, r.alarm));
        }
    } else if input.join("store.meta").is_file() {
        let mut store = SeriesStore::open_existing(input)?;
        let mut cameras = store.cameras()?;
        if cameras.is_empty() {
            cameras = load_config(cli)?.cameras().into_iter().map(|c| c.id).collect();
        }
        for cam in cameras {
            let mut status: BTreeMap<(Roi, String), (Option<f64>, u8)> = BTreeMap::new();
            for t in store.status_tables(&cam)? {
                let ts = format_ts(t.timestamp);
                for (roi, r) in &t.rois {
                    status.insert((*roi, ts.clone()), (r.prediction, r.alarm));
                }
            }
            let rows = per_camera.entry(cam.clone()).or_default();
            for roi in Roi::ALL {
                for &(t, v) in store.series(&cam, roi)? {
                    let ts = format_ts(t);
                    let (pred, alarm) = status.get(&(roi, ts.clone())).copied().unwrap_or((None, 0));
                    rows.entry(roi).or_default().push((ts, v, pred, alarm));
                }
            }
        }
    } else {
        bail!("{} is neither a simulate output nor a series store", input.display());
    }

    for (cam, mut rows) in per_camera {
        if rows.is_empty() {
            rows = Roi::ALL.iter().map(|&r| (r, Vec::new())).collect();
        }
        let dir = cli.out.join(&cam);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for (roi, list) in rows {
            let mut s = format!("{PLOT_HEADER}\n");
            for (ts, v, p, a) in list {
                let _ = writeln!(s, "{ts},{v},{},{a}", p.map(|p| p.to_string()).unwrap_or_default());
            }
            write(&dir.join(format!("{roi}.csv")), &s)?;
        }
        println!("{}", dir.display());
    }
    Ok(())
}

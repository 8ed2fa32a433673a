//! Scoring a run against injected ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use thermowatch::alarmeval::{AlarmRecord, PredictionSource, StatusTable};
use thermowatch::synthgen::GroundTruthEntry;
use thermowatch::time::{format_ts, minutes, parse_ts, Timestamp};
use thermowatch::Roi;

pub const TRACE_HEADER: &str = "timestamp,roi,temperature,prediction,source,alarm";
pub const ALARM_HEADER: &str = "timestamp,roi,registered,predicted,deviation,threshold,anomaly_start";
pub const DEFAULT_MATCHING_WINDOW: u32 = 30;
/// Anomalies peaking at least this far above the threshold must be caught.
pub const DETECTION_MARGIN: f64 = 5.0;

/// One ROI row of one status table.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub timestamp: Timestamp,
    pub roi: Roi,
    pub temperature: f64,
    pub prediction: Option<f64>,
    pub source: PredictionSource,
    pub alarm: u8,
}

pub fn trace_rows(table: &StatusTable) -> impl Iterator<Item = TraceRow> + '_ {
    table.rois.iter().map(|(&roi, r)| TraceRow {
        timestamp: table.timestamp,
        roi,
        temperature: r.temperature,
        prediction: r.prediction,
        source: r.source,
        alarm: r.alarm,
    })
}

fn source_name(s: PredictionSource) -> &'static str {
    match s {
        PredictionSource::Model => "model",
        PredictionSource::Fallback => "fallback",
        PredictionSource::None => "none",
    }
}

pub fn format_trace_row(r: &TraceRow, out: &mut String) {
    let pred = r.prediction.map(|p| p.to_string()).unwrap_or_default();
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        format_ts(r.timestamp),
        r.roi,
        r.temperature,
        pred,
        source_name(r.source),
        r.alarm
    );
}

fn field<'a>(cols: &[&'a str], i: usize, line: usize) -> Result<&'a str> {
    cols.get(i).copied().ok_or_else(|| anyhow!("line {line}: missing column {}", i + 1))
}

fn num(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| anyhow!("line {line}: bad number `{s}`"))
}

fn ts(s: &str, line: usize) -> Result<Timestamp> {
    parse_ts(s.trim()).ok_or_else(|| anyhow!("line {line}: bad timestamp `{s}`"))
}

fn roi(s: &str, line: usize) -> Result<Roi> {
    s.trim().parse().map_err(|_| anyhow!("line {line}: unknown ROI `{s}`"))
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let n = i + 1;
        if l.trim().is_empty() || l.starts_with('#') || l.starts_with("timestamp,") {
            continue;
        }
        let c: Vec<&str> = l.split(',').collect();
        if c.len() != 6 {
            bail!("line {n}: expected 6 columns, found {}", c.len());
        }
        let pred = field(&c, 3, n)?;
        out.push(TraceRow {
            timestamp: ts(c[0], n)?,
            roi: roi(c[1], n)?,
            temperature: num(c[2], n)?,
            prediction: if pred.is_empty() { None } else { Some(num(pred, n)?) },
            source: match c[4] {
                "model" => PredictionSource::Model,
                "fallback" => PredictionSource::Fallback,
                "none" => PredictionSource::None,
                other => bail!("line {n}: unknown source `{other}`"),
            },
            alarm: match c[5].trim() {
                "0" => 0,
                "1" => 1,
                other => bail!("line {n}: alarm must be 0 or 1, found `{other}`"),
            },
        });
    }
    Ok(out)
}

/// CSV alarm log; `anomaly_start` names the matched ground-truth entry.
pub fn format_alarm_log(alarms: &[AlarmRecord], eval: &Evaluation) -> String {
    let mut s = format!("{ALARM_HEADER}\n");
    for a in alarms {
        let matched = eval
            .anomalies
            .iter()
            .find(|o| o.roi == a.roi && matches(a.timestamp, o.start_ts(), o.end_ts(), eval.matching_window))
            .map(|o| o.start.clone())
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            format_ts(a.timestamp),
            a.roi,
            a.registered,
            a.predicted,
            a.deviation,
            a.threshold,
            matched
        );
    }
    s
}

/// Reads either the CSV alarm log or JSON-lines alarm records (as kept in
/// the store).
pub fn parse_alarm_log(text: &str, camera: &str) -> Result<Vec<AlarmRecord>> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let n = i + 1;
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with("timestamp,") {
            continue;
        }
        if l.starts_with('{') {
            out.push(AlarmRecord::from_line(l).with_context(|| format!("line {n}"))?);
            continue;
        }
        let c: Vec<&str> = l.split(',').collect();
        if c.len() < 6 {
            bail!("line {n}: expected at least 6 columns, found {}", c.len());
        }
        out.push(AlarmRecord {
            camera: camera.to_string(),
            timestamp: ts(c[0], n)?,
            roi: roi(c[1], n)?,
            registered: num(c[2], n)?,
            predicted: num(c[3], n)?,
            deviation: num(c[4], n)?,
            threshold: num(c[5], n)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyOutcome {
    pub roi: Roi,
    pub start: String,
    pub end: String,
    pub peak_deviation: f64,
    pub q: f64,
    /// A model prediction existed for this ROI during the anomaly.
    pub evaluable: bool,
    pub detected: bool,
    pub alarms: usize,
    pub first_alarm: Option<String>,
}

impl AnomalyOutcome {
    fn start_ts(&self) -> Timestamp {
        parse_ts(&self.start).expect("formatted by us")
    }

    fn end_ts(&self) -> Timestamp {
        parse_ts(&self.end).expect("formatted by us")
    }
}

/// A run of unmatched alarms on one ROI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalsePositive {
    pub roi: Roi,
    pub start: String,
    pub end: String,
    pub samples: usize,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub anomalies: usize,
    pub evaluable: usize,
    pub true_positives: usize,
    pub false_negatives: usize,
    /// Unmatched alarm events.
    pub false_positives: usize,
    pub false_positive_samples: usize,
    pub alarms: usize,
    pub precision: f64,
    pub recall: f64,
    /// Set when there were no alarms; precision is then reported as 1.
    pub zero_alarms: bool,
    pub threshold: f64,
    /// Evaluable anomalies peaking at least `threshold + 5` °C.
    pub strong_anomalies: usize,
    pub strong_detected: usize,
    pub strong_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub matching_window: u32,
    /// |T - T^| over model-predicted samples outside anomaly windows.
    pub deviation: BTreeMap<Roi, DeviationStats>,
    pub confusion: Confusion,
    pub anomalies: Vec<AnomalyOutcome>,
    pub false_positives: Vec<FalsePositive>,
}

fn matches(t: Timestamp, start: Timestamp, end: Timestamp, window: u32) -> bool {
    let w = minutes(window as i64);
    t >= start - w && t <= end + w
}

/// Per-ROI mean and population std of `|T - T^|`, skipping anything
/// without a model prediction or inside a ground-truth window.
pub fn deviation_stats(trace: &[TraceRow], truth: &[GroundTruthEntry]) -> BTreeMap<Roi, DeviationStats> {
    let mut acc: BTreeMap<Roi, (f64, f64, usize)> = BTreeMap::new();
    for r in trace {
        let (PredictionSource::Model, Some(p)) = (r.source, r.prediction) else {
            continue;
        };
        if truth.iter().any(|g| g.roi == r.roi && r.timestamp >= g.start && r.timestamp <= g.end) {
            continue;
        }
        let d = (r.temperature - p).abs();
        let e = acc.entry(r.roi).or_default();
        e.0 += d;
        e.1 += d * d;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(roi, (s, ss, n))| {
            let mean = s / n as f64;
            let var = (ss / n as f64 - mean * mean).max(0.0);
            (roi, DeviationStats { n, mean, std: var.sqrt() })
        })
        .collect()
}

/// Scores `alarms` against `truth`. Without a trace every anomaly counts
/// as evaluable and no deviation table is produced.
pub fn evaluate_run(
    alarms: &[AlarmRecord],
    truth: &[GroundTruthEntry],
    trace: Option<&[TraceRow]>,
    window: u32,
    threshold: f64,
) -> Evaluation {
    let mut sorted: Vec<&AlarmRecord> = alarms.iter().collect();
    sorted.sort_by(|a, b| (a.roi, a.timestamp).cmp(&(b.roi, b.timestamp)));
    let mut truth_sorted: Vec<&GroundTruthEntry> = truth.iter().collect();
    truth_sorted.sort_by(|a, b| (a.start, a.roi).cmp(&(b.start, b.roi)));

    let mut anomalies = Vec::new();
    for g in &truth_sorted {
        let hits: Vec<&&AlarmRecord> =
            sorted.iter().filter(|a| a.roi == g.roi && matches(a.timestamp, g.start, g.end, window)).collect();
        let evaluable = match trace {
            None => true,
            Some(rows) => rows.iter().any(|r| {
                r.roi == g.roi && r.source == PredictionSource::Model && r.timestamp >= g.start && r.timestamp <= g.end
            }),
        };
        anomalies.push(AnomalyOutcome {
            roi: g.roi,
            start: format_ts(g.start),
            end: format_ts(g.end),
            peak_deviation: g.peak_deviation,
            q: g.q,
            evaluable,
            detected: !hits.is_empty(),
            alarms: hits.len(),
            first_alarm: hits.first().map(|a| format_ts(a.timestamp)),
        });
    }

    let mut false_positives: Vec<FalsePositive> = Vec::new();
    let mut last: Option<(Roi, Timestamp)> = None;
    for a in &sorted {
        if truth.iter().any(|g| g.roi == a.roi && matches(a.timestamp, g.start, g.end, window)) {
            continue;
        }
        let joins = matches!(last, Some((r, t)) if r == a.roi && a.timestamp - t <= minutes(window as i64));
        match false_positives.last_mut() {
            Some(fp) if joins => {
                fp.end = format_ts(a.timestamp);
                fp.samples += 1;
                fp.max_deviation = fp.max_deviation.max(a.deviation);
            }
            _ => false_positives.push(FalsePositive {
                roi: a.roi,
                start: format_ts(a.timestamp),
                end: format_ts(a.timestamp),
                samples: 1,
                max_deviation: a.deviation,
            }),
        }
        last = Some((a.roi, a.timestamp));
    }
    false_positives.sort_by(|a, b| (&a.start, a.roi).cmp(&(&b.start, b.roi)));

    let evaluable: Vec<&AnomalyOutcome> = anomalies.iter().filter(|o| o.evaluable).collect();
    let tp = evaluable.iter().filter(|o| o.detected).count();
    let fp = false_positives.len();
    let strong: Vec<&&AnomalyOutcome> =
        evaluable.iter().filter(|o| o.peak_deviation >= threshold + DETECTION_MARGIN).collect();
    let strong_detected = strong.iter().filter(|o| o.detected).count();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let confusion = Confusion {
        anomalies: anomalies.len(),
        evaluable: evaluable.len(),
        true_positives: tp,
        false_negatives: evaluable.len() - tp,
        false_positives: fp,
        false_positive_samples: false_positives.iter().map(|f| f.samples).sum(),
        alarms: alarms.len(),
        precision: ratio(tp, tp + fp),
        recall: if evaluable.is_empty() { 1.0 } else { tp as f64 / evaluable.len() as f64 },
        zero_alarms: alarms.is_empty(),
        threshold,
        strong_anomalies: strong.len(),
        strong_detected,
        strong_recall: ratio(strong_detected, strong.len()),
    };

    Evaluation {
        matching_window: window,
        deviation: trace.map(|rows| deviation_stats(rows, truth)).unwrap_or_default(),
        confusion,
        anomalies,
        false_positives,
    }
}

/// Plain-text rendering for `summary.txt` and the terminal.
pub fn render_evaluation(e: &Evaluation) -> String {
    let mut s = String::new();
    if !e.deviation.is_empty() {
        let _ = writeln!(s, "deviation |T - T^| (model-predicted, non-anomalous samples)");
        let _ = writeln!(s, "  {:<11} {:>8} {:>16}", "roi", "samples", "mean +- std");
        for (roi, d) in &e.deviation {
            let _ = writeln!(s, "  {:<11} {:>8} {:>8.3} +- {:<6.3}", roi.to_string(), d.n, d.mean, d.std);
        }
    }
    let c = &e.confusion;
    let _ = writeln!(s, "anomalies: {} injected, {} evaluable", c.anomalies, c.evaluable);
    let _ = writeln!(
        s,
        "detection: TP {} FN {} FP {} ({} alarm samples unmatched, {} alarms total)",
        c.true_positives, c.false_negatives, c.false_positives, c.false_positive_samples, c.alarms
    );
    let _ = writeln!(
        s,
        "precision {:.3}{} recall {:.3}; peaks >= {} C: {}/{} detected",
        c.precision,
        if c.zero_alarms { " (no alarms)" } else { "" },
        c.recall,
        c.threshold + DETECTION_MARGIN,
        c.strong_detected,
        c.strong_anomalies
    );
    for o in &e.anomalies {
        let _ = writeln!(
            s,
            "  {} {:<10} peak {:>7.2} C  {}{}",
            o.start,
            o.roi.to_string(),
            o.peak_deviation,
            if o.detected { "detected" } else { "missed" },
            if o.evaluable { "" } else { " (no prediction)" }
        );
    }
    for f in &e.false_positives {
        let _ = writeln!(s, "  false positive {} {} to {} ({} samples, max {:.2} C)", f.roi, f.start, f.end, f.samples, f.max_deviation);
    }
    s
}

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use thermowatch::imaging::{default_scene_mask, write_frame, ThermalFrame};
use thermowatch::synthgen::render_frame;
use thermowatch::time::parse_ts;
use thermowatch::Roi;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thermowatch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn report_body(dir: &Path) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(v["runtime_seconds"].as_f64().unwrap() >= 0.0);
    v["body"].clone()
}

#[test]
fn synth_is_rerunnable_to_identical_bytes() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["synth", "--days", "7", "--seed", "42", "--out", p(&a)]);
    ok(&["synth", "--days", "7", "--seed", "42", "--out", p(&b)]);
    let fa = files(&a);
    assert_eq!(fa.len(), 9 + 3);
    assert_eq!(fa, files(&b));
    let series = fs::read_to_string(a.join("series/body.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 7 * 288);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);

    let c = d.path().join("c");
    ok(&["synth", "--days", "7", "--seed", "43", "--out", p(&c)]);
    assert_ne!(fs::read(a.join("series/body.csv")).unwrap(), fs::read(c.join("series/body.csv")).unwrap());
}

#[test]
fn synth_year_covers_the_calendar_year() {
    let d = tempfile::tempdir().unwrap();
    ok(&["synth", "--year", "2022", "--out", p(d.path())]);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["days"], 365);
    assert_eq!(manifest["start"], "2022-01-01");
    assert_eq!(manifest["anomalies"], 12);
    let gt = fs::read_to_string(d.path().join("ground_truth.csv")).unwrap();
    assert_eq!(gt.lines().count(), 13);
}

#[test]
fn missing_ambient_file_fails_clearly() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nowhere.csv");
    let o = run(&["synth", "--days", "3", "--aemet", p(&missing), "--out", p(&d.path().join("x"))]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nowhere.csv"), "{err}");
    assert!(err.contains("ambient"), "{err}");
}

#[test]
fn ambient_outside_the_table_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--year", "2023", "--out", p(d.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["synth", "--days", "3", "--year", "2022"]).status.code(), Some(2));
    assert_eq!(run(&["segment", "f.tfr", "--range", "5:1"]).status.code(), Some(2));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn bad_config_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    fs::write(&cfg, "[forecasting]\nridge = -1.0\nbogus = 3\n").unwrap();
    let o = run(&["--config", p(&cfg), "synth", "--days", "3", "--out", p(&d.path().join("x"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_threshold_and_determinism() {
    let d = tempfile::tempdir().unwrap();
    let ds = d.path().join("ds");
    ok(&["synth", "--days", "6", "--anomalies", "2", "--out", p(&ds)]);
    let (a, b, low) = (d.path().join("a"), d.path().join("b"), d.path().join("low"));
    let out = ok(&["simulate", p(&ds), "--no-frames", "--out", p(&a)]);
    assert!(out.contains("detection:"), "{out}");
    ok(&["simulate", p(&ds), "--no-frames", "--out", p(&b)]);
    ok(&["simulate", p(&ds), "--no-frames", "--threshold", "1", "--out", p(&low)]);

    let body = report_body(&a);
    assert_eq!(body, report_body(&b));
    assert_eq!(fs::read(a.join("alarms.csv")).unwrap(), fs::read(b.join("alarms.csv")).unwrap());
    assert_eq!(body["input"], "series");
    assert_eq!(body["run"]["processed"], 6 * 288);
    assert_eq!(body["seed"], 42);
    assert_eq!(body["config_digest"].as_str().unwrap().len(), 64);

    let fp = |b: &serde_json::Value| b["evaluation"]["confusion"]["false_positives"].as_u64().unwrap();
    let low_body = report_body(&low);
    assert_eq!(low_body["threshold"], 1.0);
    assert!(fp(&low_body) >= fp(&body));
    assert_ne!(low_body["config_digest"], body["config_digest"]);

    let trace = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 6 * 288 * 9);
    assert!(a.join("summary.txt").is_file());
}

#[test]
fn simulate_refuses_a_used_store() {
    let d = tempfile::tempdir().unwrap();
    let ds = d.path().join("ds");
    ok(&["synth", "--days", "1", "--anomalies", "0", "--out", p(&ds)]);
    let out = d.path().join("sim");
    ok(&["simulate", p(&ds), "--no-frames", "--out", p(&out)]);
    let o = run(&["simulate", p(&ds), "--no-frames", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["simulate", p(&d.path().join("missing")), "--out", p(&d.path().join("m"))]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn frames_on_disk_match_rendered_and_series_runs() {
    let d = tempfile::tempdir().unwrap();
    let ds = d.path().join("ds");
    ok(&["synth", "--days", "5", "--anomalies", "1", "--frames", "--out", p(&ds)]);
    assert_eq!(fs::read_dir(ds.join("frames")).unwrap().count(), 5 * 288 + 1);
    assert!(ds.join("mask.pgm").is_file());
    let (f, s) = (d.path().join("f"), d.path().join("s"));
    ok(&["simulate", p(&ds), "--out", p(&f)]);
    ok(&["simulate", p(&ds), "--no-frames", "--out", p(&s)]);
    let (bf, bs) = (report_body(&f), report_body(&s));
    assert_eq!(bf["input"], "frames");
    assert_eq!(bf["run"]["processed"], bs["run"]["processed"]);
    let n = |b: &serde_json::Value| b["evaluation"]["confusion"]["true_positives"].clone();
    assert_eq!(n(&bf), n(&bs));
    let regions = fs::read_to_string(f.join("store/cam01/region_sizes.csv")).unwrap();
    assert_eq!(regions.lines().count(), 1 + 5 * 288);
    let o = run(&["synth", "--days", "1", "--frames", "--out", p(&ds)]);
    assert_eq!(o.status.code(), Some(3));
}

fn frame_file(dir: &Path, w: usize, h: usize, values: Vec<f64>) -> PathBuf {
    let f = ThermalFrame::new(w, h, parse_ts("2022-01-01 12:00:00").unwrap(), values).unwrap();
    write_frame(&f, dir).unwrap()
}

#[test]
fn segment_two_level_frame() {
    let d = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..20).map(|i| if i < 10 { 2.0 } else { 200.0 }).collect();
    let f = frame_file(d.path(), 5, 4, values);
    let lm = d.path().join("labels.pgm");
    let out = ok(&["segment", p(&f), "--classes", "2", "--levels", "256", "--range", "0:256", "--labelmap", p(&lm)]);
    assert!(out.lines().any(|l| l == "thresholds 2"), "{out}");
    assert!(out.lines().any(|l| l == "regions 2"), "{out}");
    let pgm = fs::read(&lm).unwrap();
    assert!(pgm.starts_with(b"P5\n5 4\n255\n"));
    assert_eq!(&pgm[pgm.len() - 20..], &[[0u8; 10], [1u8; 10]].concat()[..]);
}

#[test]
fn segment_constant_frame_fails() {
    let d = tempfile::tempdir().unwrap();
    let f = frame_file(d.path(), 4, 4, vec![21.5; 16]);
    let o = run(&["segment", p(&f), "--classes", "2"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient contrast"));
}

/// 4-connected components of the label image, counted by flood fill.
fn mask_components() -> usize {
    let m = default_scene_mask();
    let (w, h) = (m.width(), m.height());
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            let mut next = Vec::new();
            if r > 0 {
                next.push(i - w);
            }
            if r + 1 < h {
                next.push(i + w);
            }
            if c > 0 {
                next.push(i - 1);
            }
            if c + 1 < w {
                next.push(i + 1);
            }
            for j in next {
                if !seen[j] && m.labels()[j] == m.labels()[i] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    count
}

#[test]
fn segment_rendered_scene_counts_components() {
    let d = tempfile::tempdir().unwrap();
    let values = Roi::ALL.iter().map(|&r| (r, 20.0 + 3.0 * r.id() as f64)).collect();
    let f = render_frame(&values, &default_scene_mask(), parse_ts("2022-01-01 12:00:00").unwrap()).unwrap();
    let path = write_frame(&f, d.path()).unwrap();
    let out = ok(&["segment", p(&path), "--classes", "9"]);
    let expected = mask_components();
    assert!(out.lines().any(|l| l == format!("regions {expected}")), "expected {expected}: {out}");
}

const TRUTH: &str = "roi,start,end,peak_deviation_c,q_w\n\
in_1,2022-01-05 10:00:00,2022-01-05 10:45:00,60,2000\n\
body,2022-01-06 15:00:00,2022-01-06 15:40:00,45,1500\n";

#[test]
fn metrics_on_matching_and_empty_logs() {
    let d = tempfile::tempdir().unwrap();
    let truth = d.path().join("gt.csv");
    fs::write(&truth, TRUTH).unwrap();
    let alarms = d.path().join("alarms.csv");
    fs::write(
        &alarms,
        "timestamp,roi,registered,predicted,deviation,threshold,anomaly_start\n\
         2022-01-06 15:10:00,body,70,25,45,15,\n\
         2022-01-05 10:05:00,in_1,80,20,60,15,\n",
    )
    .unwrap();
    let out = d.path().join("m");
    ok(&["metrics", "--alarms", p(&alarms), "--truth", p(&truth), "--out", p(&out)]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["confusion"]["precision"], 1.0);
    assert_eq!(m["confusion"]["recall"], 1.0);
    assert_eq!(m["matching_window"], 30);

    fs::write(&alarms, "timestamp,roi,registered,predicted,deviation,threshold,anomaly_start\n").unwrap();
    ok(&["metrics", "--alarms", p(&alarms), "--truth", p(&truth), "--out", p(&out)]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["confusion"]["recall"], 0.0);
    assert_eq!(m["confusion"]["precision"], 1.0);
    assert_eq!(m["confusion"]["zero_alarms"], true);

    fs::write(&alarms, "2022-01-06 15:10:00,notaroi,70,25,45,15\n").unwrap();
    let o = run(&["metrics", "--alarms", p(&alarms), "--truth", p(&truth), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn metrics_reproduce_simulate_scores() {
    let d = tempfile::tempdir().unwrap();
    let ds = d.path().join("ds");
    ok(&["synth", "--days", "6", "--anomalies", "2", "--out", p(&ds)]);
    let sim = d.path().join("sim");
    ok(&["simulate", p(&ds), "--no-frames", "--out", p(&sim)]);
    let m = d.path().join("m");
    ok(&[
        "metrics",
        "--alarms",
        p(&sim.join("alarms.csv")),
        "--truth",
        p(&ds.join("ground_truth.csv")),
        "--trace",
        p(&sim.join("trace.csv")),
        "--out",
        p(&m),
    ]);
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(m.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(eval, report_body(&sim)["evaluation"]);

    let from_store = d.path().join("m2");
    ok(&[
        "metrics",
        "--alarms",
        p(&sim.join("store/cam01/alarms.log")),
        "--truth",
        p(&ds.join("ground_truth.csv")),
        "--out",
        p(&from_store),
    ]);
    let e2: serde_json::Value = serde_json::from_str(&fs::read_to_string(from_store.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(e2["confusion"]["true_positives"], eval["confusion"]["true_positives"]);
    assert_eq!(e2["confusion"]["false_positives"], eval["confusion"]["false_positives"]);
}

#[test]
fn plot_data_from_report_and_store() {
    let d = tempfile::tempdir().unwrap();
    let ds = d.path().join("ds");
    ok(&["synth", "--days", "2", "--anomalies", "0", "--out", p(&ds)]);
    let sim = d.path().join("sim");
    ok(&["simulate", p(&ds), "--no-frames", "--out", p(&sim)]);

    let plots = d.path().join("plots");
    ok(&["plot-data", p(&sim), "--out", p(&plots)]);
    let names: Vec<_> = fs::read_dir(plots.join("cam01")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 9);
    for roi in Roi::ALL {
        let text = fs::read_to_string(plots.join("cam01").join(format!("{roi}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("timestamp,temperature,prediction,alarm"));
        let rows: Vec<_> = lines.collect();
        assert_eq!(rows.len(), 2 * 288);
        assert!(rows.iter().all(|r| r.split(',').count() == 4));
    }

    let from_store = d.path().join("plots2");
    ok(&["plot-data", p(&sim.join("store")), "--out", p(&from_store)]);
    let body = fs::read_to_string(from_store.join("cam01/body.csv")).unwrap();
    assert_eq!(body.lines().count(), 1 + 2 * 288);

    let empty = d.path().join("empty");
    thermowatch::store::SeriesStore::open(&empty, 5).unwrap();
    let out = d.path().join("plots3");
    ok(&["plot-data", p(&empty), "--out", p(&out)]);
    for roi in Roi::ALL {
        let text = fs::read_to_string(out.join("cam01").join(format!("{roi}.csv"))).unwrap();
        assert_eq!(text, "timestamp,temperature,prediction,alarm\n");
    }
    let o = run(&["plot-data", p(d.path()), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

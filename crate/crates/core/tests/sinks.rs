use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use indexmap::IndexMap;
use thermowatch::alarmeval::{AlertSink, HttpTransport, PredictionSource, SinkError, StatusRow, StatusTable};
use thermowatch::roi::Roi;
use thermowatch::time::{minutes, parse_ts};

fn table(m: i64) -> StatusTable {
    let mut rois = IndexMap::new();
    rois.insert(Roi::In1, StatusRow { temperature: 25.78, prediction: Some(27.39), alarm: 0, source: PredictionSource::Model });
    StatusTable { camera: "cam01".into(), timestamp: parse_ts("2023-10-18 14:05:00").unwrap() + minutes(m), rois }
}

/// Serves `n` requests with the given status, counting them.
fn server(status: u16, n: usize) -> (String, Arc<AtomicUsize>, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/status", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            bodies.push(String::from_utf8(body).unwrap());
            h.fetch_add(1, Ordering::SeqCst);
            write!(stream, "HTTP/1.1 {status} X\r\nContent-Length: 0\r\nConnection: close\r\n\r\n").unwrap();
        }
        bodies
    });
    (url, hits, handle)
}

#[test]
fn file_sink_appends_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("status.jsonl");
    let mut sink = AlertSink::file(&path, dir.path().join("overflow.jsonl"));
    let r = sink.emit(&table(0)).unwrap();
    assert_eq!(r.attempts, 1);
    sink.emit(&table(5)).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(StatusTable::from_line(lines[0]).unwrap(), table(0));
    assert_eq!(StatusTable::from_line(lines[1]).unwrap(), table(5));
    assert!(!dir.path().join("overflow.jsonl").exists());
}

#[test]
fn http_500_spools_after_three_attempts() {
    let (url, hits, handle) = server(500, 3);
    let dir = tempfile::tempdir().unwrap();
    let overflow = dir.path().join("overflow.jsonl");
    let transport = HttpTransport::new(url, Duration::from_secs(5));
    let mut sink = AlertSink::new(Box::new(transport), &overflow, 3, Duration::from_millis(1));
    match sink.emit(&table(0)) {
        Err(SinkError::SinkUnavailable { attempts, spooled, .. }) => {
            assert_eq!(attempts, 3);
            assert_eq!(spooled, overflow);
        }
        other => panic!("expected SinkUnavailable, got {other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    let spooled = std::fs::read_to_string(&overflow).unwrap();
    assert_eq!(StatusTable::from_line(spooled.trim_end()).unwrap(), table(0));
    handle.join().unwrap();
}

#[test]
fn http_2xx_is_delivered_once() {
    let (url, hits, handle) = server(204, 2);
    let dir = tempfile::tempdir().unwrap();
    let overflow = dir.path().join("overflow.jsonl");
    let mut sink = AlertSink::new(Box::new(HttpTransport::new(url, Duration::from_secs(5))), &overflow, 3, Duration::from_millis(1));
    sink.emit(&table(0)).unwrap();
    sink.emit(&table(5)).unwrap();
    let bodies = handle.join().unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    assert_eq!(StatusTable::from_line(&bodies[1]).unwrap(), table(5));
    assert!(!overflow.exists());
}

#[test]
fn unreachable_endpoint_never_drops() {
    // Bind then drop to get a port with nothing listening.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    let overflow = dir.path().join("overflow.jsonl");
    let transport = HttpTransport::new(format!("http://127.0.0.1:{port}/"), Duration::from_millis(200));
    let mut sink = AlertSink::new(Box::new(transport), &overflow, 2, Duration::from_millis(1));
    for m in 0..3 {
        assert!(sink.emit(&table(5 * m)).is_err());
    }
    assert_eq!(std::fs::read_to_string(&overflow).unwrap().lines().count(), 3);
}

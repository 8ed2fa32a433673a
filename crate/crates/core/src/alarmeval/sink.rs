//! Alert sinks: an append-only file or an HTTP endpoint.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::records::StatusTable;

#[derive(Debug, thiserror::Error)]
pub enum SinkError {
    #[error("sink unavailable after {attempts} attempts: {last}; table spooled to {}", spooled.display())]
    SinkUnavailable { attempts: u32, last: String, spooled: PathBuf },
    #[error("sink unavailable and spooling failed: {0}")]
    SpoolFailed(String),
    #[error("serialization failure: {0}")]
    SerializationFailure(#[from] serde_json::Error),
}

/// Sink configuration (`alert_sink` section).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkConfig {
    /// Append status lines to this file.
    pub file: Option<PathBuf>,
    /// POST each status document here.
    pub url: Option<String>,
    /// Where undeliverable tables are spooled.
    pub overflow: PathBuf,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    /// First retry delay; doubles on each further retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff() -> u64 {
    100
}

fn default_timeout() -> u64 {
    5000
}

/// Delivery transport for one serialized status document.
pub trait Transport: Send {
    fn describe(&self) -> String;
    fn deliver(&mut self, line: &str) -> Result<(), String>;
}

pub struct FileTransport {
    path: PathBuf,
}

impl FileTransport {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileTransport { path: path.into() }
    }
}

impl Transport for FileTransport {
    fn describe(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn deliver(&mut self, line: &str) -> Result<(), String> {
        append_line(&self.path, line).map_err(|e| e.to_string())
    }
}

pub struct HttpTransport {
    url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        HttpTransport { url: url.into(), agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }
}

impl Transport for HttpTransport {
    fn describe(&self) -> String {
        self.url.clone()
    }

    fn deliver(&mut self, line: &str) -> Result<(), String> {
        match self.agent.post(&self.url).set("Content-Type", "application/json").send_string(line) {
            Ok(resp) if (200..300).contains(&resp.status()) => Ok(()),
            Ok(resp) => Err(format!("HTTP {}", resp.status())),
            Err(ureq::Error::Status(code, _)) => Err(format!("HTTP {code}")),
            Err(e) => Err(e.to_string()),
        }
    }
}

pub(crate) fn append_line(path: &Path, line: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::with_capacity(line.len() + 1);
    buf.push_str(line);
    buf.push('\n');
    f.write_all(buf.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub sink: String,
    pub attempts: u32,
}

/// A transport with retry, backoff and a local overflow spool.
pub struct AlertSink {
    transport: Box<dyn Transport>,
    overflow: PathBuf,
    max_attempts: u32,
    backoff: Duration,
}

impl AlertSink {
    pub fn new(transport: Box<dyn Transport>, overflow: impl Into<PathBuf>, max_attempts: u32, backoff: Duration) -> Self {
        AlertSink { transport, overflow: overflow.into(), max_attempts: max_attempts.max(1), backoff }
    }

    pub fn file(path: impl Into<PathBuf>, overflow: impl Into<PathBuf>) -> Self {
        Self::new(Box::new(FileTransport::new(path)), overflow, 3, Duration::from_millis(100))
    }

    pub fn from_config(cfg: &SinkConfig) -> Result<Self, String> {
        let transport: Box<dyn Transport> = match (&cfg.url, &cfg.file) {
            (Some(url), _) => Box::new(HttpTransport::new(url.clone(), Duration::from_millis(cfg.timeout_ms))),
            (None, Some(path)) => Box::new(FileTransport::new(path.clone())),
            (None, None) => return Err("alert sink needs `url` or `file`".into()),
        };
        Ok(Self::new(transport, cfg.overflow.clone(), cfg.max_attempts, Duration::from_millis(cfg.backoff_ms)))
    }

    pub fn overflow_path(&self) -> &Path {
        &self.overflow
    }

    /// Serializes and delivers one table. After the last failed attempt the
    /// document is appended to the overflow file and the failure reported.
    pub fn emit(&mut self, table: &StatusTable) -> Result<Receipt, SinkError> {
        let line = table.to_line()?;
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            match self.transport.deliver(&line) {
                Ok(()) => return Ok(Receipt { sink: self.transport.describe(), attempts: attempt }),
                Err(e) => {
                    log::warn!("delivery to {} failed (attempt {attempt}): {e}", self.transport.describe());
                    last = e;
                }
            }
            if attempt < self.max_attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        append_line(&self.overflow, &line).map_err(|e| SinkError::SpoolFailed(format!("{last}; spool: {e}")))?;
        Err(SinkError::SinkUnavailable { attempts: self.max_attempts, last, spooled: self.overflow.clone() })
    }
}

//! Per-session presence and manipulation counters.
//!
//! Times are passed in explicitly as seconds on a monotonic clock, so the
//! store can be driven by the live server or by a script. A session counts
//! as manipulating for `ACTIVITY_WINDOW` seconds after every handle input
//! that changed the handle position.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const ACTIVITY_WINDOW: f64 = 2.0;
/// Presence histogram bin width (s); the last bin is open-ended.
pub const HISTOGRAM_BIN_S: f64 = 60.0;
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTelemetry {
    pub session_id: String,
    pub presence_s: f64,
    pub manipulation_s: f64,
    pub started_at: DateTime<Utc>,
    pub scene_switches: u64,
}

#[derive(Debug, Clone)]
struct OpenSession {
    opened: f64,
    started_at: DateTime<Utc>,
    /// Closed-form activity before the last input.
    active_s: f64,
    last_input: Option<f64>,
    last_pos: Option<f64>,
    last_blend: Option<f64>,
    scene_switches: u64,
}

impl OpenSession {
    fn activity_until(&self, now: f64) -> f64 {
        self.active_s
            + self
                .last_input
                .map_or(0.0, |t| (now - t).clamp(0.0, ACTIVITY_WINDOW))
    }

    fn snapshot(&self, id: &str, now: f64) -> SessionTelemetry {
        let presence = (now - self.opened).max(0.0);
        SessionTelemetry {
            session_id: id.to_owned(),
            presence_s: presence,
            manipulation_s: self.activity_until(now).min(presence),
            started_at: self.started_at,
            scene_switches: self.scene_switches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo_s: f64,
    /// `None` for the open-ended last bin.
    pub hi_s: Option<f64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryReport {
    pub session_count: u64,
    pub mean_presence_s: f64,
    pub mean_manipulation_s: f64,
    pub presence_histogram: Vec<HistogramBin>,
    pub open_sessions: u64,
}

#[derive(Debug, Default)]
pub struct TelemetryStore {
    open: HashMap<String, OpenSession>,
    closed: Vec<SessionTelemetry>,
    dir: Option<PathBuf>,
}

impl TelemetryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Closed sessions are also appended to `dir/sessions-YYYY-MM-DD.ndjson`.
    pub fn with_dir(dir: PathBuf) -> Self {
        Self {
            dir: Some(dir),
            ..Self::default()
        }
    }

    pub fn open(&mut self, id: &str, now: f64, started_at: DateTime<Utc>) {
        self.open.insert(
            id.to_owned(),
            OpenSession {
                opened: now,
                started_at,
                active_s: 0.0,
                last_input: None,
                last_pos: None,
                last_blend: None,
                scene_switches: 0,
            },
        );
    }

    /// Handle input; only a changed position counts as activity.
    pub fn handle_input(&mut self, id: &str, pos: f64, now: f64) {
        let Some(s) = self.open.get_mut(id) else {
            return;
        };
        if s.last_pos == Some(pos) {
            return;
        }
        s.last_pos = Some(pos);
        s.active_s = s.activity_until(now);
        s.last_input = Some(now);
    }

    /// Blend input; crossing the midpoint switches the dominant scene.
    pub fn blend_input(&mut self, id: &str, blend: f64) {
        let Some(s) = self.open.get_mut(id) else {
            return;
        };
        let prev = s.last_blend.unwrap_or(1.0);
        if (prev >= 0.5) != (blend >= 0.5) {
            s.scene_switches += 1;
        }
        s.last_blend = Some(blend);
    }

    /// Counters of a live session as of `now`.
    pub fn live(&self, id: &str, now: f64) -> Option<SessionTelemetry> {
        self.open.get(id).map(|s| s.snapshot(id, now))
    }

    pub fn close(&mut self, id: &str, now: f64) -> Option<SessionTelemetry> {
        let s = self.open.remove(id)?;
        let done = s.snapshot(id, now);
        if let Some(dir) = &self.dir {
            if let Err(e) = append_ndjson(dir, &done) {
                log::warn!("telemetry write failed: {e}");
            }
        }
        self.closed.push(done.clone());
        Some(done)
    }

    /// Closes every open session, e.g. at shutdown.
    pub fn close_all(&mut self, now: f64) {
        let ids: Vec<String> = self.open.keys().cloned().collect();
        for id in ids {
            self.close(&id, now);
        }
    }

    pub fn closed(&self) -> &[SessionTelemetry] {
        &self.closed
    }

    pub fn report(&self) -> TelemetryReport {
        let n = self.closed.len();
        let mean = |f: fn(&SessionTelemetry) -> f64| {
            if n == 0 {
                0.0
            } else {
                self.closed.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let mut presence_histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
            .map(|i| HistogramBin {
                lo_s: i as f64 * HISTOGRAM_BIN_S,
                hi_s: (i + 1 < HISTOGRAM_BINS).then(|| (i + 1) as f64 * HISTOGRAM_BIN_S),
                count: 0,
            })
            .collect();
        for s in &self.closed {
            let bin = ((s.presence_s / HISTOGRAM_BIN_S) as usize).min(HISTOGRAM_BINS - 1);
            presence_histogram[bin].count += 1;
        }
        TelemetryReport {
            session_count: n as u64,
            mean_presence_s: mean(|s| s.presence_s),
            mean_manipulation_s: mean(|s| s.manipulation_s),
            presence_histogram,
            open_sessions: self.open.len() as u64,
        }
    }
}

fn append_ndjson(dir: &std::path::Path, s: &SessionTelemetry) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let day = Utc::now().format("%Y-%m-%d");
    let path = dir.join(format!("sessions-{day}.ndjson"));
    let mut line = serde_json::to_string(s).map_err(std::io::Error::other)?;
    line.push('\n');
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?
        .write_all(line.as_bytes())
}

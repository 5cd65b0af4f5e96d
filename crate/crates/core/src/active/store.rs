//! Durable review store: an append-only JSON-lines event log replayed into an
//! in-memory index on open.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{now, ActiveError, Decision, LoopMetrics, Result, ReviewItem, RouteConfig, Status};
use crate::descriptor::Detection;
use crate::distill::LabelSet;

/// File name of the event log inside a store directory.
pub const EVENT_LOG: &str = "events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    AutoAccepted {
        at: f64,
        detection: Detection,
    },
    Enqueued {
        at: f64,
        detection: Detection,
    },
    Decided {
        at: f64,
        id: String,
        status: Status,
        #[serde(default)]
        relabel: Option<Detection>,
        #[serde(default)]
        reviewer: Option<String>,
    },
}

#[derive(Debug, Clone, Copy)]
enum Routed {
    Auto(usize),
    Queued(usize),
}

#[derive(Debug)]
pub struct ReviewStore {
    dir: PathBuf,
    log: File,
    auto: Vec<(f64, Detection)>,
    items: Vec<ReviewItem>,
    order: Vec<Routed>,
    index: HashMap<String, Routed>,
}

impl ReviewStore {
    /// Opens (creating if needed) the store in `dir` and replays its log. A
    /// torn final line left by an interrupted write is discarded.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let path = dir.join(EVENT_LOG);
        let mut log = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut bytes = Vec::new();
        log.read_to_end(&mut bytes)?;

        let mut store =
            Self { dir, log, auto: Vec::new(), items: Vec::new(), order: Vec::new(), index: HashMap::new() };
        let mut offset = 0;
        let mut line_no = 0;
        while offset < bytes.len() {
            let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
                // interrupted before the newline: never acknowledged
                let keep = offset as u64;
                store.log.set_len(keep)?;
                store.log.sync_data()?;
                break;
            };
            line_no += 1;
            let line = &bytes[offset..offset + len];
            offset += len + 1;
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let event: Event = serde_json::from_slice(line)
                .map_err(|e| ActiveError::CorruptLog { line: line_no, reason: e.to_string() })?;
            store.check(&event).map_err(|e| ActiveError::CorruptLog { line: line_no, reason: e.to_string() })?;
            store.apply(event);
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn check(&self, event: &Event) -> Result<()> {
        match event {
            Event::AutoAccepted { detection, .. } | Event::Enqueued { detection, .. } => {
                if self.index.contains_key(&detection.id) {
                    return Err(ActiveError::DuplicateId(detection.id.clone()));
                }
            }
            Event::Decided { id, status, relabel, .. } => {
                let item = self.item(id).ok_or_else(|| ActiveError::NotFound(id.clone()))?;
                if item.status != Status::Pending {
                    return Err(ActiveError::AlreadyDecided(id.clone()));
                }
                if *status == Status::Pending || (*status == Status::Relabeled) != relabel.is_some() {
                    return Err(ActiveError::Malformed(format!("inconsistent decision for {id:?}")));
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::AutoAccepted { at, detection } => {
                let r = Routed::Auto(self.auto.len());
                self.index.insert(detection.id.clone(), r);
                self.order.push(r);
                self.auto.push((at, detection));
            }
            Event::Enqueued { at, detection } => {
                let r = Routed::Queued(self.items.len());
                self.index.insert(detection.id.clone(), r);
                self.order.push(r);
                self.items.push(ReviewItem {
                    id: detection.id.clone(),
                    detection,
                    status: Status::Pending,
                    relabel: None,
                    created: at,
                    decided: None,
                    reviewer: None,
                });
            }
            Event::Decided { at, id, status, relabel, reviewer } => {
                if let Some(&Routed::Queued(i)) = self.index.get(&id) {
                    let item = &mut self.items[i];
                    item.status = status;
                    item.relabel = relabel;
                    item.decided = Some(at);
                    item.reviewer = reviewer;
                }
            }
        }
    }

    /// Writes the events and forces them to disk before applying them.
    fn commit(&mut self, events: Vec<Event>) -> Result<()> {
        let mut buf = Vec::new();
        for e in &events {
            serde_json::to_writer(&mut buf, e).expect("events serialize");
            buf.push(b'\n');
        }
        self.log.write_all(&buf)?;
        self.log.sync_data()?;
        for e in events {
            self.apply(e);
        }
        Ok(())
    }

    /// Routes `detections` into the store with the same rule as [`super::route`].
    /// Returns `(auto_accepted, queued)`.
    pub fn ingest(&mut self, detections: Vec<Detection>, cfg: &RouteConfig) -> Result<(usize, usize)> {
        self.ingest_at(detections, cfg, now())
    }

    pub fn ingest_at(&mut self, detections: Vec<Detection>, cfg: &RouteConfig, at: f64) -> Result<(usize, usize)> {
        let mut batch = std::collections::HashSet::new();
        for d in &detections {
            if self.index.contains_key(&d.id) || !batch.insert(d.id.as_str()) {
                return Err(ActiveError::DuplicateId(d.id.clone()));
            }
        }
        cfg.validate()?;
        let events: Vec<Event> = detections
            .into_iter()
            .map(|detection| {
                if detection.confidence() > cfg.t_auto {
                    Event::AutoAccepted { at, detection }
                } else {
                    Event::Enqueued { at, detection }
                }
            })
            .collect();
        let auto = events.iter().filter(|e| matches!(e, Event::AutoAccepted { .. })).count();
        let queued = events.len() - auto;
        self.commit(events)?;
        Ok((auto, queued))
    }

    /// Applies a reviewer decision to a pending item. The decision is on disk
    /// when this returns.
    pub fn decide(&mut self, id: &str, decision: Decision, reviewer: Option<String>) -> Result<ReviewItem> {
        self.decide_at(id, decision, reviewer, now())
    }

    pub fn decide_at(&mut self, id: &str, decision: Decision, reviewer: Option<String>, at: f64) -> Result<ReviewItem> {
        let (status, relabel) = match decision {
            Decision::Accept => (Status::Accepted, None),
            Decision::Reject => (Status::Rejected, None),
            Decision::Relabel(d) => {
                let mut human = d.as_human();
                human.id = id.to_string();
                (Status::Relabeled, Some(human))
            }
        };
        let event = Event::Decided { at, id: id.to_string(), status, relabel, reviewer };
        self.check(&event)?;
        self.commit(vec![event])?;
        Ok(self.item(id).expect("just decided").clone())
    }

    pub fn item(&self, id: &str) -> Option<&ReviewItem> {
        match self.index.get(id)? {
            Routed::Queued(i) => Some(&self.items[*i]),
            Routed::Auto(_) => None,
        }
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    /// Review items in routing order, optionally filtered by status.
    pub fn queue(&self, status: Option<Status>, limit: usize) -> Vec<&ReviewItem> {
        self.items.iter().filter(|i| status.is_none_or(|s| i.status == s)).take(limit).collect()
    }

    pub fn auto_accepted(&self) -> impl Iterator<Item = &Detection> {
        self.auto.iter().map(|(_, d)| d)
    }

    /// Detections that should feed the next training round: the auto-accepted
    /// stream, human-accepted items and the replacements of relabeled items,
    /// in routing order.
    pub fn export_feedback(&self) -> LabelSet {
        let items = self
            .order
            .iter()
            .filter_map(|r| match *r {
                Routed::Auto(i) => Some(self.auto[i].1.clone()),
                Routed::Queued(i) => {
                    let item = &self.items[i];
                    match item.status {
                        Status::Accepted => Some(item.detection.clone()),
                        Status::Relabeled => item.relabel.clone(),
                        Status::Pending | Status::Rejected => None,
                    }
                }
            })
            .collect();
        LabelSet::new(items).expect("store ids are unique")
    }

    pub fn metrics(&self, window: f64) -> Result<LoopMetrics> {
        self.metrics_at(now(), window)
    }

    pub fn metrics_at(&self, now: f64, window: f64) -> Result<LoopMetrics> {
        if !(window > 0.0) || !window.is_finite() {
            return Err(ActiveError::InvalidWindow(window));
        }
        let inside = |t: f64| t <= now && t >= now - window;
        let total = self.auto.len() + self.items.len();
        let completed = self.auto.iter().filter(|(at, _)| inside(*at)).count()
            + self.items.iter().filter(|i| i.decided.is_some_and(inside)).count();
        Ok(LoopMetrics {
            total,
            auto_accepted: self.auto.len(),
            reviewed: self.items.len(),
            pending: self.items.iter().filter(|i| i.status == Status::Pending).count(),
            automation_ratio: (total > 0).then(|| self.auto.len() as f64 / total as f64),
            window_seconds: window,
            completed_in_window: completed,
            throughput: completed as f64 / window,
        })
    }
}

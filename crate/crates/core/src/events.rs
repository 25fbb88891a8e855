//! Append-only environment event log, serialisable as JSON lines.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrive,
    Dispatch,
    /// Selected job did not fit on any VM; it stays queued.
    PlacementBlocked,
    Complete,
    Dismiss,
    /// Action referenced an empty slot and was treated as a no-op.
    InvalidAction,
    /// Usage stayed above the threshold with nothing left to dismiss.
    OverloadWithoutVictims,
    /// Job left unfinished when the tick limit ended the episode.
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub event_kind: EventKind,
    pub job_id: Option<u64>,
    pub detail: Value,
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, tick: u64, event_kind: EventKind, job_id: Option<u64>, detail: Value) {
        self.events.push(Event {
            tick,
            event_kind,
            job_id,
            detail,
        });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.event_kind == kind).count()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for event in &self.events {
            serde_json::to_writer(&mut out, event).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<Event>, _>>()
            .map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
        Ok(EventLog { events })
    }
}

/// Outcome of replaying a log against the terminal-state and victim-ordering rules.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplaySummary {
    pub arrived: usize,
    pub completed: usize,
    pub dismissed: usize,
    pub truncated: usize,
    /// Human-readable descriptions of every violated rule.
    pub violations: Vec<String>,
}

impl ReplaySummary {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replays the log: every arrived job must end exactly once (completed,
/// dismissed or truncated), and no dismissed job may have a higher priority
/// than a job still queued at the moment of its dismissal.
///
/// Arrival events must carry `{"priority": p}` in their detail.
pub fn replay(log: &EventLog) -> ReplaySummary {
    #[derive(PartialEq)]
    enum JobState {
        Queued,
        Running,
        Done,
    }
    let mut summary = ReplaySummary::default();
    let mut state: BTreeMap<u64, (JobState, f64)> = BTreeMap::new();

    for ev in log.events() {
        let Some(id) = ev.job_id else { continue };
        match ev.event_kind {
            EventKind::Arrive => {
                let p = ev.detail.get("priority").and_then(Value::as_f64).unwrap_or(f64::NAN);
                if state.insert(id, (JobState::Queued, p)).is_some() {
                    summary.violations.push(format!("job {id} arrived twice"));
                }
                summary.arrived += 1;
            }
            EventKind::Dispatch => match state.get_mut(&id) {
                Some(entry) if entry.0 == JobState::Queued => entry.0 = JobState::Running,
                _ => summary.violations.push(format!("job {id} dispatched while not queued")),
            },
            EventKind::Complete => match state.get_mut(&id) {
                Some(entry) if entry.0 == JobState::Running => {
                    entry.0 = JobState::Done;
                    summary.completed += 1;
                }
                _ => summary.violations.push(format!("job {id} completed while not running")),
            },
            EventKind::Dismiss => {
                let Some((s, p)) = state.get(&id).map(|(s, p)| (s == &JobState::Queued, *p)) else {
                    summary.violations.push(format!("unknown job {id} dismissed"));
                    continue;
                };
                if !s {
                    summary.violations.push(format!("job {id} dismissed while not queued"));
                    continue;
                }
                if let Some((other, (_, q))) = state
                    .iter()
                    .find(|(other, (st, q))| **other != id && *st == JobState::Queued && *q < p)
                {
                    summary
                        .violations
                        .push(format!("job {id} (priority {p}) dismissed ahead of queued job {other} (priority {q})"));
                }
                state.get_mut(&id).unwrap().0 = JobState::Done;
                summary.dismissed += 1;
            }
            EventKind::Truncate => match state.get_mut(&id) {
                Some(entry) if entry.0 != JobState::Done => {
                    entry.0 = JobState::Done;
                    summary.truncated += 1;
                }
                _ => summary.violations.push(format!("job {id} truncated after finishing")),
            },
            EventKind::PlacementBlocked | EventKind::InvalidAction | EventKind::OverloadWithoutVictims => {}
        }
    }
    let unfinished = state.values().filter(|(s, _)| *s != JobState::Done).count();
    if unfinished > 0 {
        summary.violations.push(format!("{unfinished} jobs never reached a terminal state"));
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn arrive(log: &mut EventLog, tick: u64, id: u64, p: f64) {
        log.push(tick, EventKind::Arrive, Some(id), json!({ "priority": p }));
    }

    #[test]
    fn clean_replay() {
        let mut log = EventLog::default();
        arrive(&mut log, 0, 0, 0.9);
        arrive(&mut log, 0, 1, 0.1);
        log.push(1, EventKind::Dismiss, Some(1), Value::Null);
        log.push(1, EventKind::Dispatch, Some(0), Value::Null);
        log.push(3, EventKind::Complete, Some(0), Value::Null);
        let s = replay(&log);
        assert!(s.is_clean(), "{:?}", s.violations);
        assert_eq!((s.arrived, s.completed, s.dismissed), (2, 1, 1));
    }

    #[test]
    fn detects_out_of_order_dismissal_and_leaks() {
        let mut log = EventLog::default();
        arrive(&mut log, 0, 0, 0.9);
        arrive(&mut log, 0, 1, 0.1);
        log.push(1, EventKind::Dismiss, Some(0), Value::Null);
        let s = replay(&log);
        assert_eq!(s.violations.len(), 2, "{:?}", s.violations);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut log = EventLog::default();
        arrive(&mut log, 0, 7, 0.4);
        log.push(2, EventKind::InvalidAction, None, json!({ "slot": 3 }));
        let f = tempfile::NamedTempFile::new().unwrap();
        log.write_jsonl(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"event_kind\":\"invalid_action\""));
        assert_eq!(EventLog::read_jsonl(f.path()).unwrap().events(), log.events());
    }
}

//! Event logs: parsing, chronological splitting, prefix extraction, and
//! consecutive-duplicate removal.
//!
//! A log is a collection of traces; a trace is the time-ordered sequence of
//! events belonging to one case. The interchange format is a three-column
//! CSV (`case_id,activity,timestamp`) with no quoting.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "case_id,activity,timestamp";

const DAY_SECONDS: f64 = 86_400.0;
const WEEK_SECONDS: f64 = 604_800.0;
// The Unix epoch (1970-01-01) fell on a Thursday, four days after Sunday.
const EPOCH_OFFSET_FROM_SUNDAY: f64 = 4.0 * DAY_SECONDS;

/// An absolute instant, stored as Unix seconds (UTC). Parsed events carry
/// whole seconds; events synthesized during suffix rollout may be fractional.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Timestamp(f64);

impl Timestamp {
    pub fn from_unix_seconds(secs: f64) -> Self {
        Timestamp(secs)
    }

    pub fn as_unix_seconds(self) -> f64 {
        self.0
    }

    /// Seconds elapsed since the most recent midnight (UTC), in [0, 86400).
    pub fn seconds_since_midnight(self) -> f64 {
        self.0.rem_euclid(DAY_SECONDS)
    }

    /// Seconds elapsed since the most recent Sunday midnight (UTC), in [0, 604800).
    pub fn seconds_since_week_start(self) -> f64 {
        (self.0 + EPOCH_OFFSET_FROM_SUNDAY).rem_euclid(WEEK_SECONDS)
    }

    /// Accepts RFC 3339 (`2012-03-01T09:00:00Z`) or `YYYY-MM-DD HH:MM:SS`
    /// (read as UTC). Returns None on anything else.
    pub fn parse(text: &str) -> Option<Self> {
        if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
            return Some(Timestamp(dt.timestamp() as f64));
        }
        if let Ok(naive) = NaiveDateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S") {
            return Some(Timestamp(naive.and_utc().timestamp() as f64));
        }
        None
    }
}

/// One activity occurrence in one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub timestamp: Timestamp,
}

/// The events of one case, in non-decreasing timestamp order.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    events: Vec<Event>,
}

impl Trace {
    /// Builds a trace, checking the ordering and shared-case invariants.
    pub fn new(events: Vec<Event>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyInput("trace"));
        }
        let case = &events[0].case_id;
        for w in events.windows(2) {
            if w[1].case_id != *case {
                return Err(Error::InvalidConfig(format!(
                    "trace mixes cases {:?} and {:?}",
                    case, w[1].case_id
                )));
            }
            if w[1].timestamp < w[0].timestamp {
                return Err(Error::InvalidConfig(format!(
                    "trace {:?} has decreasing timestamps",
                    case
                )));
            }
        }
        Ok(Trace { events })
    }

    pub fn case_id(&self) -> &str {
        &self.events[0].case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction
    }

    /// First `k` events as an owned trace. Panics if `k` is 0 or exceeds the length.
    pub fn prefix(&self, k: usize) -> Trace {
        assert!(k >= 1 && k <= self.len(), "prefix length out of range");
        Trace {
            events: self.events[..k].to_vec(),
        }
    }

    /// Everything after the first `k` events.
    pub fn suffix(&self, k: usize) -> &[Event] {
        &self.events[k..]
    }

    /// Evaluation prefixes: `(prefix, k)` for every k in `[2, len - 1]`.
    /// Traces shorter than 3 events yield nothing.
    pub fn prefixes(&self) -> impl Iterator<Item = (Trace, usize)> + '_ {
        (2..self.len()).map(move |k| (self.prefix(k), k))
    }

    fn first_timestamp(&self) -> Timestamp {
        self.events[0].timestamp
    }
}

/// Bijection between activity labels and their positions, in
/// first-appearance order.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityIndex {
    labels: Vec<String>,
    positions: HashMap<String, usize>,
}

impl ActivityIndex {
    pub fn from_labels(labels: Vec<String>) -> Self {
        let positions = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        ActivityIndex { labels, positions }
    }

    pub fn get(&self, activity: &str) -> Option<usize> {
        self.positions.get(activity).copied()
    }

    pub fn label(&self, position: usize) -> &str {
        &self.labels[position]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A parsed event log: traces plus the activity alphabet they draw from.
#[derive(Clone, Debug)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub index: ActivityIndex,
}

impl EventLog {
    /// Builds a log from traces, deriving the alphabet from the activities
    /// present (first-appearance order across traces).
    pub fn from_traces(traces: Vec<Trace>) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::EmptyLog);
        }
        let mut labels: Vec<String> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        for trace in &traces {
            for event in trace.events() {
                if seen.insert(event.activity.clone()) {
                    labels.push(event.activity.clone());
                }
            }
        }
        Ok(EventLog {
            traces,
            index: ActivityIndex::from_labels(labels),
        })
    }

    pub fn alphabet(&self) -> &[String] {
        self.index.labels()
    }

    pub fn total_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn longest_trace(&self) -> usize {
        self.traces.iter().map(Trace::len).max().unwrap_or(0)
    }

    /// Orders traces by the timestamp of their first event (ties keep input
    /// order) and puts the first ⌈fraction·n⌉ in the training half. Both
    /// halves share this log's alphabet.
    pub fn split_chronological(&self, fraction: f64) -> Result<(EventLog, EventLog)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidFraction(fraction));
        }
        let n = self.traces.len();
        if n < 2 {
            return Err(Error::TooFewTraces(n));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.traces[a]
                .first_timestamp()
                .partial_cmp(&self.traces[b].first_timestamp())
                .expect("timestamps are finite")
        });
        let n_train = (fraction * n as f64).ceil() as usize;
        let n_train = n_train.clamp(1, n);
        let train = order[..n_train]
            .iter()
            .map(|&i| self.traces[i].clone())
            .collect();
        let test = order[n_train..]
            .iter()
            .map(|&i| self.traces[i].clone())
            .collect();
        Ok((
            EventLog {
                traces: train,
                index: self.index.clone(),
            },
            EventLog {
                traces: test,
                index: self.index.clone(),
            },
        ))
    }

    /// Collapses runs of consecutive same-activity events to their first
    /// event. With `keep_last_event`, the final event of each trace is
    /// retained even when it continues a collapsed run.
    pub fn dedup_consecutive(&self, keep_last_event: bool) -> EventLog {
        let traces = self
            .traces
            .iter()
            .map(|trace| {
                let events = trace.events();
                let mut kept = vec![events[0].clone()];
                for w in events.windows(2) {
                    if w[1].activity != w[0].activity {
                        kept.push(w[1].clone());
                    }
                }
                let last_was_dropped = events.len() >= 2
                    && events[events.len() - 1].activity == events[events.len() - 2].activity;
                if keep_last_event && last_was_dropped {
                    kept.push(events[events.len() - 1].clone());
                }
                Trace { events: kept }
            })
            .collect();
        EventLog {
            traces,
            index: self.index.clone(),
        }
    }
}

/// Parses the three-column CSV interchange format.
///
/// Rows are grouped by case id in order of first appearance; within a case,
/// rows are stably sorted by timestamp. The alphabet is built from distinct
/// activities in file order. Commas inside fields are rejected (the format
/// has no quoting).
pub fn parse_csv(reader: impl BufRead) -> Result<EventLog> {
    let mut lines = reader.lines().enumerate();

    let header = loop {
        match lines.next() {
            None => return Err(Error::EmptyLog),
            Some((line_no, line)) => {
                let line = line?;
                let trimmed = line.trim_start_matches('\u{feff}').trim();
                if trimmed.is_empty() {
                    continue;
                }
                break (line_no + 1, trimmed.to_string());
            }
        }
    };
    if header.1 != CSV_HEADER {
        return Err(Error::Parse {
            line: header.0,
            message: format!("expected header {:?}, got {:?}", CSV_HEADER, header.1),
        });
    }

    let mut case_order: Vec<String> = Vec::new();
    let mut cases: HashMap<String, Vec<Event>> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut label_seen: HashSet<String> = HashSet::new();

    for (line_no, line) in lines {
        let line = line?;
        let line_no = line_no + 1;
        let row = line.trim_end_matches(['\r', '\n']);
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected 3 comma-separated fields, got {} (quoting is not supported)",
                    fields.len()
                ),
            });
        }
        let (case_id, activity, ts_text) = (fields[0], fields[1], fields[2]);
        if activity.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "activity must be non-empty".into(),
            });
        }
        let timestamp = Timestamp::parse(ts_text).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("malformed timestamp {:?}", ts_text),
        })?;

        if label_seen.insert(activity.to_string()) {
            labels.push(activity.to_string());
        }
        let bucket = cases.entry(case_id.to_string()).or_insert_with(|| {
            case_order.push(case_id.to_string());
            Vec::new()
        });
        bucket.push(Event {
            case_id: case_id.to_string(),
            activity: activity.to_string(),
            timestamp,
        });
    }

    if case_order.is_empty() {
        return Err(Error::EmptyLog);
    }

    let mut traces = Vec::with_capacity(case_order.len());
    for case_id in &case_order {
        let mut events = cases.remove(case_id).expect("case registered");
        events.sort_by(|a, b| {
            a.timestamp
                .partial_cmp(&b.timestamp)
                .expect("timestamps are finite")
        });
        traces.push(Trace { events });
    }

    Ok(EventLog {
        traces,
        index: ActivityIndex::from_labels(labels),
    })
}

pub fn parse_csv_str(text: &str) -> Result<EventLog> {
    parse_csv(text.as_bytes())
}

pub fn parse_csv_path(path: &std::path::Path) -> Result<EventLog> {
    let file = std::fs::File::open(path).map_err(|source| Error::ReadInput {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(std::io::BufReader::new(file))
}

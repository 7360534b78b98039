//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowcast::eventlog::{Event, EventLog, Timestamp, Trace};

pub const DAY: f64 = 86_400.0;
pub const HOUR: f64 = 3_600.0;

/// A noise-free log: `copies` cases following the same activity route with
/// fixed `gap` seconds between events; case i starts i days after the base.
pub fn synthetic_log(copies: usize, route: &[&str], gap: f64) -> EventLog {
    let base = 1_330_000_000.0; // 2012-02-23, a Thursday
    let traces = (0..copies)
        .map(|i| {
            let start = base + i as f64 * DAY;
            let events = route
                .iter()
                .enumerate()
                .map(|(j, activity)| Event {
                    case_id: format!("case{i}"),
                    activity: activity.to_string(),
                    timestamp: Timestamp::from_unix_seconds(start + j as f64 * gap),
                })
                .collect();
            Trace::new(events).unwrap()
        })
        .collect();
    EventLog::from_traces(traces).unwrap()
}

/// Same process rendered as the CSV interchange format.
pub fn synthetic_csv(copies: usize, route: &[&str], gap_secs: i64) -> String {
    let mut out = String::from("case_id,activity,timestamp\n");
    // base instant as a calendar string; chrono-free arithmetic over minutes
    for i in 0..copies {
        for (j, activity) in route.iter().enumerate() {
            let day = 1 + i;
            let total_secs = 9 * 3600 + j as i64 * gap_secs;
            let (h, rem) = (total_secs / 3600, total_secs % 3600);
            let (m, s) = (rem / 60, rem % 60);
            out.push_str(&format!(
                "case{i},{activity},2012-03-{day:02} {h:02}:{m:02}:{s:02}\n"
            ));
        }
    }
    out
}

pub fn flowcast_bin() -> &'static str {
    env!("CARGO_BIN_EXE_flowcast")
}

pub fn run_cli<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(flowcast_bin())
        .args(args)
        .output()
        .expect("binary runs")
}

/// Looks for a benchmark dataset, first under `$FLOWCAST_DATA_DIR`, then
/// under `data/` at the workspace root.
pub fn dataset_path(name: &str) -> Option<PathBuf> {
    if let Ok(dir) = std::env::var("FLOWCAST_DATA_DIR") {
        let p = Path::new(&dir).join(name);
        if p.exists() {
            return Some(p);
        }
    }
    let workspace = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let p = workspace.join(name);
    p.exists().then_some(p)
}

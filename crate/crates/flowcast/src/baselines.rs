//! Annotated transition-system predictors. Training prefixes are mapped to
//! states through a set, bag, or sequence abstraction over their activity
//! labels; each state carries the average observed time to the next event
//! and the average observed remaining time. Unseen states fall back to the
//! global averages, so prediction is total.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{EventLog, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abstraction {
    Set,
    Bag,
    Sequence,
}

/// Statistic used to annotate states. The reported numbers use the mean;
/// the median exists for sensitivity checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnnotationStat {
    Mean,
    Median,
}

/// Which annotation a lookup should return.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsTarget {
    NextDelta,
    Remaining,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateAnnotation {
    pub mean_time_to_next: f64,
    pub mean_remaining: f64,
    pub support: usize,
}

#[derive(Clone, Debug)]
pub struct TransitionSystem {
    states: HashMap<Vec<String>, StateAnnotation>,
    pub abstraction: Abstraction,
    pub global_mean_next: f64,
    pub global_mean_remaining: f64,
}

/// State key of a prefix under an abstraction: the distinct labels (set),
/// the sorted labels with multiplicity (bag), or the label sequence.
pub fn abstract_prefix(prefix: &Trace, kind: Abstraction) -> Vec<String> {
    let mut labels: Vec<String> = prefix.events().iter().map(|e| e.activity.clone()).collect();
    match kind {
        Abstraction::Sequence => labels,
        Abstraction::Bag => {
            labels.sort();
            labels
        }
        Abstraction::Set => {
            labels.sort();
            labels.dedup();
            labels
        }
    }
}

fn reduce(values: &mut [f64], stat: AnnotationStat) -> f64 {
    match stat {
        AnnotationStat::Mean => values.iter().sum::<f64>() / values.len() as f64,
        AnnotationStat::Median => {
            values.sort_by(|a, b| a.partial_cmp(b).expect("durations are finite"));
            let n = values.len();
            if n % 2 == 1 {
                values[n / 2]
            } else {
                0.5 * (values[n / 2 - 1] + values[n / 2])
            }
        }
    }
}

/// Builds the annotated transition system from every proper prefix of every
/// training trace; the full-trace prefix has no next event and contributes
/// nothing.
pub fn build_ts(train: &EventLog, kind: Abstraction) -> Result<TransitionSystem> {
    build_ts_with_stat(train, kind, AnnotationStat::Mean)
}

pub fn build_ts_with_stat(
    train: &EventLog,
    kind: Abstraction,
    stat: AnnotationStat,
) -> Result<TransitionSystem> {
    if train.traces.is_empty() {
        return Err(Error::EmptyInput("build_ts"));
    }
    let mut observations: HashMap<Vec<String>, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut global_next: Vec<f64> = Vec::new();
    let mut global_remaining: Vec<f64> = Vec::new();

    for trace in &train.traces {
        let events = trace.events();
        let end = events[events.len() - 1].timestamp.as_unix_seconds();
        let mut key_so_far: Vec<String> = Vec::new();
        for k in 1..events.len() {
            key_so_far.push(events[k - 1].activity.clone());
            let key = match kind {
                Abstraction::Sequence => key_so_far.clone(),
                Abstraction::Bag => {
                    let mut b = key_so_far.clone();
                    b.sort();
                    b
                }
                Abstraction::Set => {
                    let mut s = key_so_far.clone();
                    s.sort();
                    s.dedup();
                    s
                }
            };
            let at = events[k - 1].timestamp.as_unix_seconds();
            let next_gap = events[k].timestamp.as_unix_seconds() - at;
            let remaining = end - at;
            let entry = observations.entry(key).or_default();
            entry.0.push(next_gap);
            entry.1.push(remaining);
            global_next.push(next_gap);
            global_remaining.push(remaining);
        }
    }
    if global_next.is_empty() {
        return Err(Error::NoTimeGaps);
    }

    let states = observations
        .into_iter()
        .map(|(key, (mut next, mut remaining))| {
            let support = next.len();
            let annotation = StateAnnotation {
                mean_time_to_next: reduce(&mut next, stat),
                mean_remaining: reduce(&mut remaining, stat),
                support,
            };
            (key, annotation)
        })
        .collect();

    Ok(TransitionSystem {
        states,
        abstraction: kind,
        global_mean_next: reduce(&mut global_next, stat),
        global_mean_remaining: reduce(&mut global_remaining, stat),
    })
}

impl TransitionSystem {
    pub fn state(&self, key: &[String]) -> Option<&StateAnnotation> {
        self.states.get(key)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }
}

/// Total lookup: the state's annotation if the prefix was seen in training,
/// otherwise the global training average.
pub fn ts_predict(ts: &TransitionSystem, prefix: &Trace, target: TsTarget) -> f64 {
    let key = abstract_prefix(prefix, ts.abstraction);
    match (ts.states.get(&key), target) {
        (Some(a), TsTarget::NextDelta) => a.mean_time_to_next,
        (Some(a), TsTarget::Remaining) => a.mean_remaining,
        (None, TsTarget::NextDelta) => ts.global_mean_next,
        (None, TsTarget::Remaining) => ts.global_mean_remaining,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::{Event, Timestamp, Trace};

    fn trace_at(case: &str, steps: &[(&str, f64)]) -> Trace {
        Trace::new(
            steps
                .iter()
                .map(|(a, t)| Event {
                    case_id: case.into(),
                    activity: (*a).into(),
                    timestamp: Timestamp::from_unix_seconds(*t),
                })
                .collect(),
        )
        .unwrap()
    }

    fn key(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn abstraction_examples() {
        let aba = trace_at("c", &[("a", 0.0), ("b", 1.0), ("a", 2.0)]);
        assert_eq!(abstract_prefix(&aba, Abstraction::Set), key(&["a", "b"]));
        assert_eq!(
            abstract_prefix(&aba, Abstraction::Bag),
            key(&["a", "a", "b"])
        );
        assert_eq!(
            abstract_prefix(&aba, Abstraction::Sequence),
            key(&["a", "b", "a"])
        );

        let aab = trace_at("c", &[("a", 0.0), ("a", 1.0), ("b", 2.0)]);
        assert_eq!(
            abstract_prefix(&aba, Abstraction::Bag),
            abstract_prefix(&aab, Abstraction::Bag)
        );
        assert_ne!(
            abstract_prefix(&aba, Abstraction::Sequence),
            abstract_prefix(&aab, Abstraction::Sequence)
        );
    }

    #[test]
    fn build_annotates_by_hand_computed_means() {
        let log = EventLog::from_traces(vec![trace_at(
            "c",
            &[("a", 0.0), ("b", 60.0), ("c", 180.0)],
        )])
        .unwrap();
        let ts = build_ts(&log, Abstraction::Sequence).unwrap();

        let state_a = ts.state(&key(&["a"])).unwrap();
        assert_eq!(state_a.mean_time_to_next, 60.0);
        assert_eq!(state_a.mean_remaining, 180.0);
        assert_eq!(state_a.support, 1);

        let state_ab = ts.state(&key(&["a", "b"])).unwrap();
        assert_eq!(state_ab.mean_time_to_next, 120.0);
        assert_eq!(state_ab.mean_remaining, 120.0);

        // the full-trace prefix contributes no state
        assert_eq!(ts.num_states(), 2);
    }

    #[test]
    fn repeated_states_average() {
        let log = EventLog::from_traces(vec![
            trace_at("c1", &[("a", 0.0), ("b", 60.0)]),
            trace_at("c2", &[("a", 1000.0), ("b", 1120.0)]),
        ])
        .unwrap();
        let ts = build_ts(&log, Abstraction::Sequence).unwrap();
        let state = ts.state(&key(&["a"])).unwrap();
        assert_eq!(state.mean_time_to_next, 90.0); // mean of 60 and 120
        assert_eq!(state.support, 2);
    }

    #[test]
    fn lookup_falls_back_to_global_mean() {
        let log = EventLog::from_traces(vec![trace_at("c", &[("a", 0.0), ("b", 100.0)])]).unwrap();
        let ts = build_ts(&log, Abstraction::Sequence).unwrap();

        let seen = trace_at("x", &[("a", 5.0)]);
        assert_eq!(ts_predict(&ts, &seen, TsTarget::NextDelta), 100.0);

        let unseen = trace_at("x", &[("q", 5.0)]);
        assert_eq!(
            ts_predict(&ts, &unseen, TsTarget::NextDelta),
            ts.global_mean_next
        );
        assert_eq!(
            ts_predict(&ts, &unseen, TsTarget::Remaining),
            ts.global_mean_remaining
        );
    }

    #[test]
    fn set_ignores_order_sequence_does_not() {
        let log = EventLog::from_traces(vec![
            trace_at("c1", &[("a", 0.0), ("b", 10.0), ("c", 30.0)]),
            trace_at("c2", &[("b", 0.0), ("a", 10.0), ("c", 50.0)]),
        ])
        .unwrap();
        let set_ts = build_ts(&log, Abstraction::Set).unwrap();
        let seq_ts = build_ts(&log, Abstraction::Sequence).unwrap();

        let ab = trace_at("x", &[("a", 0.0), ("b", 10.0)]);
        let ba = trace_at("x", &[("b", 0.0), ("a", 10.0)]);
        assert_eq!(
            ts_predict(&set_ts, &ab, TsTarget::NextDelta),
            ts_predict(&set_ts, &ba, TsTarget::NextDelta)
        );
        // under the sequence abstraction the two orders hit different states
        assert_eq!(ts_predict(&seq_ts, &ab, TsTarget::NextDelta), 20.0);
        assert_eq!(ts_predict(&seq_ts, &ba, TsTarget::NextDelta), 40.0);
    }

    #[test]
    fn means_match_brute_force_recomputation() {
        // oracle: recompute annotations from scratch with explicit lists
        let log = EventLog::from_traces(vec![
            trace_at("c1", &[("a", 0.0), ("b", 60.0), ("a", 100.0), ("c", 400.0)]),
            trace_at("c2", &[("a", 10.0), ("b", 25.0), ("c", 600.0)]),
            trace_at("c3", &[("b", 0.0), ("b", 7.0)]),
        ])
        .unwrap();
        for kind in [Abstraction::Set, Abstraction::Bag, Abstraction::Sequence] {
            let ts = build_ts(&log, kind).unwrap();
            let mut lists: HashMap<Vec<String>, Vec<(f64, f64)>> = HashMap::new();
            for trace in &log.traces {
                let events = trace.events();
                let end = events[events.len() - 1].timestamp.as_unix_seconds();
                for k in 1..events.len() {
                    let prefix = trace.prefix(k);
                    let at = events[k - 1].timestamp.as_unix_seconds();
                    lists
                        .entry(abstract_prefix(&prefix, kind))
                        .or_default()
                        .push((events[k].timestamp.as_unix_seconds() - at, end - at));
                }
            }
            assert_eq!(lists.len(), ts.num_states());
            for (k, obs) in lists {
                let state = ts.state(&k).unwrap();
                let mean_next = obs.iter().map(|o| o.0).sum::<f64>() / obs.len() as f64;
                let mean_rem = obs.iter().map(|o| o.1).sum::<f64>() / obs.len() as f64;
                assert!((state.mean_time_to_next - mean_next).abs() < 1e-9);
                assert!((state.mean_remaining - mean_rem).abs() < 1e-9);
                assert_eq!(state.support, obs.len());
            }
        }
    }

    #[test]
    fn median_stat_differs_from_mean_on_skewed_data() {
        let log = EventLog::from_traces(vec![
            trace_at("c1", &[("a", 0.0), ("b", 10.0)]),
            trace_at("c2", &[("a", 0.0), ("b", 10.0)]),
            trace_at("c3", &[("a", 0.0), ("b", 1000.0)]),
        ])
        .unwrap();
        let mean_ts =
            build_ts_with_stat(&log, Abstraction::Sequence, AnnotationStat::Mean).unwrap();
        let median_ts =
            build_ts_with_stat(&log, Abstraction::Sequence, AnnotationStat::Median).unwrap();
        let a = trace_at("x", &[("a", 0.0)]);
        assert_eq!(ts_predict(&mean_ts, &a, TsTarget::NextDelta), 340.0);
        assert_eq!(ts_predict(&median_ts, &a, TsTarget::NextDelta), 10.0);
    }
}

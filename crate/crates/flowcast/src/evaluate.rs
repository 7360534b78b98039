//! Evaluation drivers: run a predictor over every evaluation prefix
//! (lengths 2 ≤ k < |σ|) of a test log and collect metric records.
//! Work fans out across traces; records come back in trace order.

use rayon::prelude::*;

use crate::baselines::{ts_predict, TransitionSystem, TsTarget};
use crate::error::{Error, Result};
use crate::eventlog::{EventLog, Trace};
use crate::metrics::EvalRecord;
use crate::prediction::{predict_next, predict_suffix, Model};

/// Position of an activity in the model alphabet; a miss signals a
/// train/test alphabet mismatch.
fn class_of(model: &Model, activity: &str) -> Result<usize> {
    model
        .index
        .get(activity)
        .ok_or_else(|| Error::UnknownActivity(activity.to_string()))
}

/// Next-activity and next-delta records for a model.
pub fn collect_next_records(model: &Model, test: &EventLog) -> Result<Vec<EvalRecord>> {
    let per_trace: Vec<Result<Vec<EvalRecord>>> = test
        .traces
        .par_iter()
        .map(|trace| {
            let mut records = Vec::new();
            for (prefix, k) in trace.prefixes() {
                let next = predict_next(model, &prefix)?;
                let events = trace.events();
                let actual_class = class_of(model, &events[k].activity)?;
                let actual_gap = events[k].timestamp.as_unix_seconds()
                    - events[k - 1].timestamp.as_unix_seconds();
                records.push(EvalRecord {
                    prefix_length: k,
                    activity: Some((next.argmax(), actual_class)),
                    seconds: Some((next.predicted_delta, actual_gap)),
                    suffix: None,
                });
            }
            Ok(records)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_trace {
        out.extend(r?);
    }
    Ok(out)
}

/// Suffix records for a model; also returns how many rollouts hit the cap.
pub fn collect_suffix_records(
    model: &Model,
    test: &EventLog,
    cap: usize,
) -> Result<(Vec<EvalRecord>, usize)> {
    let per_trace: Vec<Result<(Vec<EvalRecord>, usize)>> = test
        .traces
        .par_iter()
        .map(|trace| {
            let mut records = Vec::new();
            let mut truncated = 0usize;
            for (prefix, k) in trace.prefixes() {
                let predicted = predict_suffix(model, &prefix, cap)?;
                let actual: Vec<usize> = trace
                    .suffix(k)
                    .iter()
                    .map(|e| class_of(model, &e.activity))
                    .collect::<Result<_>>()?;
                if predicted.truncated {
                    truncated += 1;
                }
                records.push(EvalRecord {
                    prefix_length: k,
                    activity: None,
                    seconds: None,
                    suffix: Some((predicted.activities, actual)),
                });
            }
            Ok((records, truncated))
        })
        .collect();
    let mut out = Vec::new();
    let mut truncated = 0usize;
    for r in per_trace {
        let (records, t) = r?;
        out.extend(records);
        truncated += t;
    }
    Ok((out, truncated))
}

/// Remaining-time records for any per-prefix predictor (model rollout or
/// transition-system lookup). Ground truth is the time from the prefix's
/// last event to the end of its trace.
pub fn collect_remaining_records<F>(test: &EventLog, predict: F) -> Result<Vec<EvalRecord>>
where
    F: Fn(&Trace) -> Result<f64> + Sync,
{
    let per_trace: Vec<Result<Vec<EvalRecord>>> = test
        .traces
        .par_iter()
        .map(|trace| {
            let events = trace.events();
            let end = events[events.len() - 1].timestamp.as_unix_seconds();
            let mut records = Vec::new();
            for (prefix, k) in trace.prefixes() {
                let predicted = predict(&prefix)?;
                let actual = end - events[k - 1].timestamp.as_unix_seconds();
                records.push(EvalRecord {
                    prefix_length: k,
                    activity: None,
                    seconds: Some((predicted, actual)),
                    suffix: None,
                });
            }
            Ok(records)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_trace {
        out.extend(r?);
    }
    Ok(out)
}

/// Next-delta records for a transition-system baseline.
pub fn collect_ts_next_records(ts: &TransitionSystem, test: &EventLog) -> Vec<EvalRecord> {
    let per_trace: Vec<Vec<EvalRecord>> = test
        .traces
        .par_iter()
        .map(|trace| {
            let events = trace.events();
            trace
                .prefixes()
                .map(|(prefix, k)| {
                    let predicted = ts_predict(ts, &prefix, TsTarget::NextDelta);
                    let actual = events[k].timestamp.as_unix_seconds()
                        - events[k - 1].timestamp.as_unix_seconds();
                    EvalRecord {
                        prefix_length: k,
                        activity: None,
                        seconds: Some((predicted, actual)),
                        suffix: None,
                    }
                })
                .collect()
        })
        .collect();
    per_trace.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{build_ts, Abstraction};
    use crate::encoding::NormConstants;
    use crate::eventlog::{Event, Timestamp, Trace};
    use crate::network::{CellKind, NetworkConfig, NetworkParams};

    fn tiny_log() -> EventLog {
        let trace = |case: &str, start: f64| {
            Trace::new(
                ["a", "b", "c"]
                    .iter()
                    .enumerate()
                    .map(|(j, a)| Event {
                        case_id: case.into(),
                        activity: (*a).into(),
                        timestamp: Timestamp::from_unix_seconds(start + j as f64 * 60.0),
                    })
                    .collect(),
            )
            .unwrap()
        };
        EventLog::from_traces(vec![trace("c1", 0.0), trace("c2", 10_000.0)]).unwrap()
    }

    fn tiny_model(log: &EventLog) -> Model {
        let config = NetworkConfig {
            total_layers: 1,
            shared_layers: 1,
            neurons: 4,
            input_dim: log.index.len() + 3,
            activity_out_dim: log.index.len() + 1,
            cell_kind: CellKind::Lstm,
            seed: 5,
        };
        let params = NetworkParams::init(&config).unwrap();
        Model::new(config, params, NormConstants::new(60.0), log.index.clone()).unwrap()
    }

    #[test]
    fn record_counts_follow_the_prefix_rule() {
        let log = tiny_log();
        let model = tiny_model(&log);
        // length-3 traces yield exactly one evaluation prefix each
        let records = collect_next_records(&model, &log).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.prefix_length == 2));

        let (suffix_records, _) = collect_suffix_records(&model, &log, 10).unwrap();
        assert_eq!(suffix_records.len(), 2);
        let (_, actual) = suffix_records[0].suffix.as_ref().unwrap();
        assert_eq!(actual, &[2]); // the "c" class

        let remaining = collect_remaining_records(&log, |_| Ok(0.0)).unwrap();
        assert_eq!(remaining.len(), 2);
        // the k=2 prefix ends at t+60 and the trace at t+120
        assert_eq!(remaining[0].seconds, Some((0.0, 60.0)));
    }

    #[test]
    fn ts_records_match_direct_lookup() {
        let log = tiny_log();
        let ts = build_ts(&log, Abstraction::Sequence).unwrap();
        let records = collect_ts_next_records(&ts, &log);
        assert_eq!(records.len(), 2);
        for r in &records {
            // state ⟨a,b⟩ was observed with a 60 s gap in training
            assert_eq!(r.seconds, Some((60.0, 60.0)));
        }
    }

    #[test]
    fn alphabet_mismatch_surfaces() {
        let log = tiny_log();
        let model = tiny_model(&log);
        let other = EventLog::from_traces(vec![Trace::new(
            ["a", "zz", "c"]
                .iter()
                .enumerate()
                .map(|(j, a)| Event {
                    case_id: "x".into(),
                    activity: (*a).into(),
                    timestamp: Timestamp::from_unix_seconds(j as f64),
                })
                .collect(),
        )
        .unwrap()])
        .unwrap();
        assert!(matches!(
            collect_next_records(&model, &other),
            Err(Error::UnknownActivity(_))
        ));
    }
}

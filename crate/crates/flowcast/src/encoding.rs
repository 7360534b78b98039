//! Feature encoding: event prefixes become sequences of |A|+3 input
//! vectors, and each training prefix gets an (activity class, time delta)
//! target. All time features are scaled so the network sees O(1) inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{ActivityIndex, EventLog, Timestamp, Trace};

/// Scaling constants fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    /// Mean inter-event gap over the training traces, in seconds.
    pub mean_delta: f64,
    pub day_seconds: f64,
    pub week_seconds: f64,
}

impl NormConstants {
    pub fn new(mean_delta: f64) -> Self {
        NormConstants {
            mean_delta,
            day_seconds: 86_400.0,
            week_seconds: 604_800.0,
        }
    }
}

/// One time step of network input: one-hot activity over |A| positions,
/// then normalized inter-event delta, time-of-day, and time-of-week.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedStep {
    pub features: Vec<f64>,
}

impl EncodedStep {
    /// Number of trailing time features after the one-hot block.
    pub const TIME_FEATURES: usize = 3;

    /// Index of the 1 in the one-hot block.
    pub fn activity_position(&self, alphabet_len: usize) -> Option<usize> {
        self.features[..alphabet_len].iter().position(|&v| v == 1.0)
    }
}

/// Training target for one prefix: the class of the next event (the last
/// class marks end of case) and the normalized time until it.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetPair {
    /// Class in `0..=|A|`; class `|A|` is the end-of-case marker.
    pub next_activity: usize,
    /// Normalized gap to the next event; 0 at end of case.
    pub next_delta: f64,
}

/// Mean inter-event gap over all consecutive event pairs in the log.
pub fn fit_normalizer(train: &EventLog) -> Result<NormConstants> {
    if train.traces.is_empty() {
        return Err(Error::EmptyInput("fit_normalizer"));
    }
    let mut sum = 0.0;
    let mut count = 0u64;
    for trace in &train.traces {
        for w in trace.events().windows(2) {
            sum += w[1].timestamp.as_unix_seconds() - w[0].timestamp.as_unix_seconds();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoTimeGaps);
    }
    let mean_delta = sum / count as f64;
    if !mean_delta.is_finite() || mean_delta <= 0.0 {
        return Err(Error::ZeroMeanDelta);
    }
    Ok(NormConstants::new(mean_delta))
}

/// Encodes a single event given its activity position and the previous
/// event's timestamp (None for the first event of a trace). Shared by
/// prefix encoding and suffix rollout so the two cannot diverge.
pub fn encode_event(
    activity_position: usize,
    timestamp: Timestamp,
    prev_timestamp: Option<Timestamp>,
    alphabet_len: usize,
    norm: &NormConstants,
) -> EncodedStep {
    let mut features = vec![0.0; alphabet_len + EncodedStep::TIME_FEATURES];
    features[activity_position] = 1.0;
    let delta = match prev_timestamp {
        None => 0.0,
        Some(prev) => (timestamp.as_unix_seconds() - prev.as_unix_seconds()) / norm.mean_delta,
    };
    features[alphabet_len] = delta;
    features[alphabet_len + 1] = timestamp.seconds_since_midnight() / norm.day_seconds;
    features[alphabet_len + 2] = timestamp.seconds_since_week_start() / norm.week_seconds;
    EncodedStep { features }
}

/// Encodes every event of a prefix. Errors on activities missing from the
/// index (a train/test alphabet mismatch).
pub fn encode_prefix(
    prefix: &Trace,
    index: &ActivityIndex,
    norm: &NormConstants,
) -> Result<Vec<EncodedStep>> {
    let mut steps = Vec::with_capacity(prefix.len());
    let mut prev: Option<Timestamp> = None;
    for event in prefix.events() {
        let position = index
            .get(&event.activity)
            .ok_or_else(|| Error::UnknownActivity(event.activity.clone()))?;
        steps.push(encode_event(
            position,
            event.timestamp,
            prev,
            index.len(),
            norm,
        ));
        prev = Some(event.timestamp);
    }
    Ok(steps)
}

/// Target for prefix length `k` of `trace`: the event at `k+1`, or the
/// end-of-case class with delta 0 when the prefix is the whole trace.
pub fn encode_target(
    trace: &Trace,
    k: usize,
    index: &ActivityIndex,
    norm: &NormConstants,
) -> Result<TargetPair> {
    let len = trace.len();
    if k < 2 || k > len {
        return Err(Error::PrefixOutOfRange { k, len });
    }
    if k == len {
        return Ok(TargetPair {
            next_activity: index.len(),
            next_delta: 0.0,
        });
    }
    let events = trace.events();
    let next = &events[k]; // the event one step past the prefix
    let position = index
        .get(&next.activity)
        .ok_or_else(|| Error::UnknownActivity(next.activity.clone()))?;
    let gap = next.timestamp.as_unix_seconds() - events[k - 1].timestamp.as_unix_seconds();
    Ok(TargetPair {
        next_activity: position,
        next_delta: gap / norm.mean_delta,
    })
}

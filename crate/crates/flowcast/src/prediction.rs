//! Inference over a trained model: next event, iterated suffix rollout with
//! an end-of-case stop and a length cap, and remaining cycle time.

use crate::encoding::{encode_event, encode_prefix, NormConstants};
use crate::error::{Error, Result};
use crate::eventlog::{ActivityIndex, Timestamp, Trace};
use crate::network::{softmax, NetworkConfig, NetworkParams, StreamState};

/// A trained network bundled with everything needed to run it on raw traces.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: NetworkConfig,
    pub params: NetworkParams,
    pub norm: NormConstants,
    pub index: ActivityIndex,
}

impl Model {
    pub fn new(
        config: NetworkConfig,
        params: NetworkParams,
        norm: NormConstants,
        index: ActivityIndex,
    ) -> Result<Self> {
        params.validate_against(&config)?;
        if config.input_dim != index.len() + 3 {
            return Err(Error::InvalidConfig(format!(
                "model input dim {} does not fit an alphabet of {} activities",
                config.input_dim,
                index.len()
            )));
        }
        Ok(Model {
            config,
            params,
            norm,
            index,
        })
    }

    /// Class index that marks end of case.
    pub fn end_of_case_class(&self) -> usize {
        self.config.end_of_case_class()
    }
}

/// Distribution over the next activity (end-of-case included as the last
/// class) plus the predicted time until it.
#[derive(Clone, Debug)]
pub struct NextPrediction {
    pub distribution: Vec<f64>,
    /// Seconds; negative raw outputs are clamped to zero.
    pub predicted_delta: f64,
    pub predicted_timestamp: Timestamp,
}

impl NextPrediction {
    pub fn argmax(&self) -> usize {
        argmax(&self.distribution)
    }
}

/// Predicted continuation of a running case.
#[derive(Clone, Debug)]
pub struct SuffixPrediction {
    /// Activity positions in the model alphabet (never the end-of-case class).
    pub activities: Vec<usize>,
    pub timestamps: Vec<Timestamp>,
    /// Set when the rollout hit the length cap instead of predicting end of case.
    pub truncated: bool,
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn stream_prefix(model: &Model, prefix: &Trace) -> Result<(StreamState, Vec<f64>, f64)> {
    let steps = encode_prefix(prefix, &model.index, &model.norm)?;
    let mut state = model.params.stream_start();
    let mut last = None;
    for step in &steps {
        last = Some(model.params.stream_step(&mut state, &step.features));
    }
    let (logits, time_out) = last.expect("traces are non-empty");
    Ok((state, logits, time_out))
}

/// Runs the network over the prefix and reads the final-step outputs.
pub fn predict_next(model: &Model, prefix: &Trace) -> Result<NextPrediction> {
    let (_, logits, time_out) = stream_prefix(model, prefix)?;
    let predicted_delta = time_out.max(0.0) * model.norm.mean_delta;
    let last_ts = prefix.events()[prefix.len() - 1].timestamp;
    Ok(NextPrediction {
        distribution: softmax(&logits),
        predicted_delta,
        predicted_timestamp: Timestamp::from_unix_seconds(
            last_ts.as_unix_seconds() + predicted_delta,
        ),
    })
}

struct Rollout {
    activities: Vec<usize>,
    deltas: Vec<f64>,
    timestamps: Vec<Timestamp>,
    truncated: bool,
}

/// Iterates next-event prediction, appending a synthetic event with the
/// argmax activity and the predicted timestamp each round, until the argmax
/// is the end-of-case class or `cap` events have been appended. Synthetic
/// events are re-encoded exactly like real ones.
fn rollout(model: &Model, prefix: &Trace, cap: usize) -> Result<Rollout> {
    if cap < 1 {
        return Err(Error::InvalidConfig("suffix cap must be at least 1".into()));
    }
    let (mut state, mut logits, mut time_out) = stream_prefix(model, prefix)?;
    let eoc = model.end_of_case_class();
    let mut prev_ts = prefix.events()[prefix.len() - 1].timestamp;

    let mut out = Rollout {
        activities: Vec::new(),
        deltas: Vec::new(),
        timestamps: Vec::new(),
        truncated: false,
    };
    loop {
        let class = argmax(&logits);
        if class == eoc {
            break;
        }
        let delta = time_out.max(0.0) * model.norm.mean_delta;
        let ts = Timestamp::from_unix_seconds(prev_ts.as_unix_seconds() + delta);
        out.activities.push(class);
        out.deltas.push(delta);
        out.timestamps.push(ts);
        if out.activities.len() == cap {
            out.truncated = true;
            break;
        }
        let step = encode_event(class, ts, Some(prev_ts), model.index.len(), &model.norm);
        let (l, t) = model.params.stream_step(&mut state, &step.features);
        logits = l;
        time_out = t;
        prev_ts = ts;
    }
    Ok(out)
}

pub fn predict_suffix(model: &Model, prefix: &Trace, cap: usize) -> Result<SuffixPrediction> {
    let r = rollout(model, prefix, cap)?;
    Ok(SuffixPrediction {
        activities: r.activities,
        timestamps: r.timestamps,
        truncated: r.truncated,
    })
}

/// Remaining cycle time in seconds: the sum of the predicted deltas along
/// the suffix (zero when the model immediately predicts end of case).
pub fn predict_remaining_time(model: &Model, prefix: &Trace, cap: usize) -> Result<f64> {
    let r = rollout(model, prefix, cap)?;
    Ok(r.deltas.iter().sum())
}

//! Adam optimization over encoded training prefixes with equal-length
//! minibatches, a chronological validation slice, and early stopping.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoding::{
    encode_prefix, encode_target, fit_normalizer, EncodedStep, NormConstants, TargetPair,
};
use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::linalg::add_assign;
use crate::network::{backward_at_steps, forward, loss_at_steps, NetworkConfig, NetworkParams};

/// Optimizer and loop hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub loss_weight: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 150,
            patience: 10,
            val_fraction: 0.2,
            loss_weight: 1.0,
        }
    }
}

/// Adam moment accumulators, shaped like the parameters they update.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: NetworkParams,
    pub v: NetworkParams,
    pub t: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(template: &NetworkParams, hyper: &TrainHyper) -> Self {
        AdamState {
            m: template.zeros_like(),
            v: template.zeros_like(),
            t: 0,
            alpha: hyper.learning_rate,
            beta1: hyper.beta1,
            beta2: hyper.beta2,
            epsilon: hyper.epsilon,
        }
    }
}

/// One bias-corrected Adam update. Errors on any non-finite gradient entry,
/// leaving parameters and moments untouched.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut AdamState,
) -> Result<()> {
    for tensor in grads.tensors() {
        if tensor.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    let (b1, b2) = (state.beta1, state.beta2);
    let (alpha, eps) = (state.alpha, state.epsilon);

    let m_tensors = state.m.tensors_mut();
    let v_tensors = state.v.tensors_mut();
    let p_tensors = params.tensors_mut();
    let g_tensors = grads.tensors();
    for (((p, g), m), v) in p_tensors
        .into_iter()
        .zip(g_tensors)
        .zip(m_tensors)
        .zip(v_tensors)
    {
        for j in 0..p.len() {
            let grad = g[j];
            m[j] = b1 * m[j] + (1.0 - b1) * grad;
            v[j] = b2 * v[j] + (1.0 - b2) * grad * grad;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= alpha * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Loss trajectory of a run plus where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRow>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    /// Informational only; not part of the CSV so reruns stay byte-identical.
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for row in &self.epochs {
            out.push_str(&format!(
                "{},{},{}\n",
                row.epoch, row.train_loss, row.val_loss
            ));
        }
        out
    }
}

/// One training example: prefix `hd^k` of a trace with the target for its
/// final step.
#[derive(Clone, Copy)]
struct Sample {
    trace: usize,
    k: usize,
}

struct SampleSet {
    encoded: Vec<Vec<EncodedStep>>,
    targets: Vec<Vec<TargetPair>>, // index k-2 holds the target for prefix length k
    samples: Vec<Sample>,
}

impl SampleSet {
    fn build(log: &EventLog, trace_ids: &[usize], norm: &NormConstants) -> Result<SampleSet> {
        let mut encoded = Vec::with_capacity(trace_ids.len());
        let mut targets = Vec::with_capacity(trace_ids.len());
        let mut samples = Vec::new();
        for (local, &ti) in trace_ids.iter().enumerate() {
            let trace = &log.traces[ti];
            encoded.push(encode_prefix(trace, &log.index, norm)?);
            let mut per_trace = Vec::new();
            for k in 2..=trace.len() {
                per_trace.push(encode_target(trace, k, &log.index, norm)?);
                samples.push(Sample { trace: local, k });
            }
            targets.push(per_trace);
        }
        Ok(SampleSet {
            encoded,
            targets,
            samples,
        })
    }

    fn target(&self, s: Sample) -> &TargetPair {
        &self.targets[s.trace][s.k - 2]
    }

    fn steps(&self, s: Sample) -> &[EncodedStep] {
        &self.encoded[s.trace][..s.k]
    }
}

/// Fixed chunking for the parallel gradient reduction; summing chunk results
/// in index order keeps runs bit-identical for any worker count.
const GRAD_CHUNK: usize = 4;

fn add_params(acc: &mut NetworkParams, other: &NetworkParams) {
    for (a, b) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        add_assign(a, b);
    }
}

fn scale_params(p: &mut NetworkParams, s: f64) {
    for tensor in p.tensors_mut() {
        for v in tensor.iter_mut() {
            *v *= s;
        }
    }
}

fn batch_gradient(
    params: &NetworkParams,
    config: &NetworkConfig,
    set: &SampleSet,
    batch: &[Sample],
    weight: f64,
) -> Result<(f64, NetworkParams)> {
    let partials: Vec<Result<(f64, NetworkParams)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grad_sum: Option<NetworkParams> = None;
            let mut loss_sum = 0.0;
            for &sample in chunk {
                let fwd = forward(params, config, set.steps(sample))?;
                let step_targets = [(sample.k - 1, set.target(sample))];
                loss_sum +=
                    loss_at_steps(&fwd.activity_logits, &fwd.time_preds, &step_targets, weight);
                let g = backward_at_steps(params, &fwd, &step_targets, weight);
                match grad_sum.as_mut() {
                    None => grad_sum = Some(g),
                    Some(acc) => add_params(acc, &g),
                }
            }
            Ok((loss_sum, grad_sum.expect("chunks are non-empty")))
        })
        .collect();

    let mut total_loss = 0.0;
    let mut total_grad: Option<NetworkParams> = None;
    for partial in partials {
        let (l, g) = partial?;
        total_loss += l;
        match total_grad.as_mut() {
            None => total_grad = Some(g),
            Some(acc) => add_params(acc, &g),
        }
    }
    let mut grad = total_grad.expect("batches are non-empty");
    scale_params(&mut grad, 1.0 / batch.len() as f64);
    Ok((total_loss, grad))
}

fn mean_loss(params: &NetworkParams, config: &NetworkConfig, set: &SampleSet, weight: f64) -> f64 {
    if set.samples.is_empty() {
        return f64::NAN;
    }
    let losses: Vec<f64> = set
        .samples
        .par_iter()
        .map(|&sample| {
            let fwd = forward(params, config, set.steps(sample)).expect("validated dimensions");
            let step_targets = [(sample.k - 1, set.target(sample))];
            loss_at_steps(&fwd.activity_logits, &fwd.time_preds, &step_targets, weight)
        })
        .collect();
    losses.iter().sum::<f64>() / losses.len() as f64
}

/// Trains on every prefix of `train_log`'s traces (prefix lengths 2..=|σ|,
/// the final one carrying the end-of-case target). The last `val_fraction`
/// of traces (chronologically) form a validation slice used for early
/// stopping; the returned parameters are from the best validation epoch.
pub fn train(
    train_log: &EventLog,
    config: &NetworkConfig,
    hyper: &TrainHyper,
) -> Result<(NetworkParams, NormConstants, TrainReport)> {
    let started = Instant::now();
    config.validate()?;
    let alphabet = train_log.index.len();
    if config.input_dim != alphabet + 3 || config.activity_out_dim != alphabet + 1 {
        return Err(Error::InvalidConfig(format!(
            "network dims (input {}, out {}) do not match an alphabet of {} activities",
            config.input_dim, config.activity_out_dim, alphabet
        )));
    }
    let norm = fit_normalizer(train_log)?;

    // chronological validation slice: the final fraction of traces
    let n = train_log.traces.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let ta = train_log.traces[a].events()[0].timestamp;
        let tb = train_log.traces[b].events()[0].timestamp;
        ta.partial_cmp(&tb).expect("timestamps are finite")
    });
    let n_val = if n >= 2 {
        ((hyper.val_fraction * n as f64).ceil() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let fit_ids: Vec<usize> = order[..n - n_val].to_vec();
    let val_ids: Vec<usize> = order[n - n_val..].to_vec();

    let fit_set = SampleSet::build(train_log, &fit_ids, &norm)?;
    let val_set = SampleSet::build(train_log, &val_ids, &norm)?;
    if fit_set.samples.is_empty() {
        return Err(Error::EmptyInput("training samples"));
    }

    let mut params = NetworkParams::init(config)?;
    let mut adam = AdamState::new(&params, hyper);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));

    // equal-length buckets so every batch runs the same number of steps
    let mut buckets: Vec<Vec<Sample>> = Vec::new();
    {
        let mut by_len: std::collections::BTreeMap<usize, Vec<Sample>> = Default::default();
        for &s in &fit_set.samples {
            by_len.entry(s.k).or_default().push(s);
        }
        buckets.extend(by_len.into_values());
    }

    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;
    let mut rows = Vec::new();
    let mut stopped_epoch = 0usize;

    for epoch in 1..=hyper.max_epochs {
        let mut batches: Vec<Vec<Sample>> = Vec::new();
        for bucket in &mut buckets {
            bucket.shuffle(&mut rng);
            for chunk in bucket.chunks(hyper.batch_size.max(1)) {
                batches.push(chunk.to_vec());
            }
        }
        batches.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for batch in &batches {
            let (batch_loss, grads) =
                batch_gradient(&params, config, &fit_set, batch, hyper.loss_weight)?;
            loss_sum += batch_loss;
            adam_step(&mut params, &grads, &mut adam)?;
        }
        let train_loss = loss_sum / fit_set.samples.len() as f64;
        let val_loss = if val_set.samples.is_empty() {
            train_loss
        } else {
            mean_loss(&params, config, &val_set, hyper.loss_weight)
        };
        rows.push(EpochRow {
            epoch,
            train_loss,
            val_loss,
        });
        stopped_epoch = epoch;

        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hyper.patience {
                break;
            }
        }
    }

    let report = TrainReport {
        epochs: rows,
        best_epoch,
        stopped_epoch,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((best_params, norm, report))
}

//! Loss and exact gradients through the unrolled recurrence.
//!
//! The joint loss averages cross-entropy over the activity head and absolute
//! error over the time head across the scored steps. Training scores only a
//! prefix's final step; the gradient checker scores every step. Both paths
//! run through the same step-mask core.

use crate::encoding::TargetPair;
use crate::error::{Error, Result};
use crate::linalg::add_assign;
use crate::network::{
    cell::concat_into, Forward, LayerParams, LayerTape, LstmLayerParams, LstmLayerTape,
    NetworkParams, RnnLayerParams, RnnLayerTape,
};

/// Probabilities are clamped here before the log so a confident miss cannot
/// produce an infinite loss.
const PROB_FLOOR: f64 = 1e-10;

/// Numerically stable softmax (shifted by the max logit).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Joint loss over aligned per-step outputs and targets: mean cross-entropy
/// plus `weight` times mean absolute time error.
pub fn loss(
    activity_logits: &[Vec<f64>],
    time_preds: &[f64],
    targets: &[TargetPair],
    weight: f64,
) -> Result<f64> {
    if activity_logits.len() != targets.len() || time_preds.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "loss targets",
            expected: activity_logits.len(),
            actual: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput("loss"));
    }
    let indexed: Vec<(usize, &TargetPair)> = targets.iter().enumerate().collect();
    Ok(loss_at_steps(activity_logits, time_preds, &indexed, weight))
}

pub(crate) fn loss_at_steps(
    activity_logits: &[Vec<f64>],
    time_preds: &[f64],
    step_targets: &[(usize, &TargetPair)],
    weight: f64,
) -> f64 {
    let m = step_targets.len() as f64;
    let mut ce = 0.0;
    let mut ae = 0.0;
    for &(t, target) in step_targets {
        let probs = softmax(&activity_logits[t]);
        ce -= probs[target.next_activity].max(PROB_FLOOR).ln();
        ae += (time_preds[t] - target.next_delta).abs();
    }
    ce / m + weight * ae / m
}

/// Gradients of the joint loss with one target per step.
pub fn backward(
    params: &NetworkParams,
    fwd: &Forward,
    targets: &[TargetPair],
    weight: f64,
) -> Result<NetworkParams> {
    if targets.len() != fwd.time_preds.len() {
        return Err(Error::DimensionMismatch {
            context: "backward targets",
            expected: fwd.time_preds.len(),
            actual: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput("backward"));
    }
    let indexed: Vec<(usize, &TargetPair)> = targets.iter().enumerate().collect();
    Ok(backward_at_steps(params, fwd, &indexed, weight))
}

/// Core reverse pass: targets attached to an arbitrary subset of steps, each
/// weighted 1/m with m the number of scored steps.
pub(crate) fn backward_at_steps(
    params: &NetworkParams,
    fwd: &Forward,
    step_targets: &[(usize, &TargetPair)],
    weight: f64,
) -> NetworkParams {
    let tape = &fwd.tape;
    let t_len = tape.inputs.len();
    let m = step_targets.len() as f64;
    let mut grads = params.zeros_like();

    let shared_out: &[Vec<f64>] = tape.shared.last().map(|t| t.h()).unwrap_or(&tape.inputs);
    let activity_top: &[Vec<f64>] = tape.activity.last().map(|t| t.h()).unwrap_or(shared_out);
    let time_top: &[Vec<f64>] = tape.time.last().map(|t| t.h()).unwrap_or(shared_out);

    let top_dim = activity_top[0].len();
    let mut d_activity_top = vec![vec![0.0; top_dim]; t_len];
    let mut d_time_top = vec![vec![0.0; top_dim]; t_len];

    for &(t, target) in step_targets {
        // activity head: d logits = (softmax - onehot) / m
        let mut d_logits = softmax(&fwd.activity_logits[t]);
        d_logits[target.next_activity] -= 1.0;
        for v in &mut d_logits {
            *v /= m;
        }
        grads.activity_head.w.outer_add(&d_logits, &activity_top[t]);
        add_assign(&mut grads.activity_head.b, &d_logits);
        params
            .activity_head
            .w
            .matvec_t_add(&d_logits, &mut d_activity_top[t]);

        // time head: subgradient of |pred - target|, zero at the kink
        let diff = fwd.time_preds[t] - target.next_delta;
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        let d_time = weight * sign / m;
        grads.time_head.w.outer_add(&[d_time], &time_top[t]);
        grads.time_head.b[0] += d_time;
        params
            .time_head
            .w
            .matvec_t_add(&[d_time], &mut d_time_top[t]);
    }

    let shared_bottom: &[Vec<f64>] = &tape.inputs;
    let branch_bottom: &[Vec<f64>] = if params.shared_stack.is_empty() {
        shared_bottom
    } else {
        shared_out
    };

    let d_from_activity = stack_backward(
        &params.activity_stack,
        &tape.activity,
        branch_bottom,
        d_activity_top,
        &mut grads.activity_stack,
    );
    let d_from_time = stack_backward(
        &params.time_stack,
        &tape.time,
        branch_bottom,
        d_time_top,
        &mut grads.time_stack,
    );

    let mut d_shared_top = d_from_activity;
    for (a, b) in d_shared_top.iter_mut().zip(&d_from_time) {
        add_assign(a, b);
    }
    // gradient w.r.t. the raw inputs is discarded
    let _ = stack_backward(
        &params.shared_stack,
        &tape.shared,
        shared_bottom,
        d_shared_top,
        &mut grads.shared_stack,
    );

    grads
}

fn stack_backward(
    stack: &[LayerParams],
    tapes: &[LayerTape],
    bottom_input: &[Vec<f64>],
    d_top: Vec<Vec<f64>>,
    grads: &mut [LayerParams],
) -> Vec<Vec<f64>> {
    let mut d = d_top;
    for idx in (0..stack.len()).rev() {
        let input_seq: &[Vec<f64>] = if idx == 0 {
            bottom_input
        } else {
            tapes[idx - 1].h()
        };
        d = match (&stack[idx], &tapes[idx], &mut grads[idx]) {
            (LayerParams::Lstm(p), LayerTape::Lstm(t), LayerParams::Lstm(g)) => {
                lstm_layer_backward(p, t, input_seq, &d, g)
            }
            (LayerParams::Rnn(p), LayerTape::Rnn(t), LayerParams::Rnn(g)) => {
                rnn_layer_backward(p, t, input_seq, &d, g)
            }
            _ => unreachable!("tape and parameter kinds always match"),
        };
    }
    d
}

fn lstm_layer_backward(
    p: &LstmLayerParams,
    tape: &LstmLayerTape,
    input_seq: &[Vec<f64>],
    d_out: &[Vec<f64>],
    g: &mut LstmLayerParams,
) -> Vec<Vec<f64>> {
    let t_len = d_out.len();
    let n = p.hidden_len();
    let in_dim = input_seq[0].len();

    let mut d_in = vec![vec![0.0; in_dim]; t_len];
    let mut dh_rec = vec![0.0; n];
    let mut dc_rec = vec![0.0; n];
    let mut dzf = vec![0.0; n];
    let mut dzi = vec![0.0; n];
    let mut dzg = vec![0.0; n];
    let mut dzo = vec![0.0; n];
    let mut concat = vec![0.0; n + in_dim];
    let mut d_concat = vec![0.0; n + in_dim];
    let zeros = vec![0.0; n];

    for t in (0..t_len).rev() {
        let f = &tape.f[t];
        let i = &tape.i[t];
        let o = &tape.o[t];
        let gate_g = &tape.g[t];
        let tanh_c = &tape.tanh_c[t];
        let c_prev = if t == 0 { &zeros } else { &tape.c[t - 1] };
        let h_prev = if t == 0 { &zeros } else { &tape.h[t - 1] };

        for j in 0..n {
            let dh = d_out[t][j] + dh_rec[j];
            let d_o = dh * tanh_c[j];
            let dc = dc_rec[j] + dh * o[j] * (1.0 - tanh_c[j] * tanh_c[j]);
            let df = dc * c_prev[j];
            let di = dc * gate_g[j];
            let dg = dc * i[j];
            dzf[j] = df * f[j] * (1.0 - f[j]);
            dzi[j] = di * i[j] * (1.0 - i[j]);
            dzg[j] = dg * (1.0 - gate_g[j] * gate_g[j]);
            dzo[j] = d_o * o[j] * (1.0 - o[j]);
            dc_rec[j] = dc * f[j];
        }

        concat_into(&mut concat, h_prev, &input_seq[t]);
        g.w_f.outer_add(&dzf, &concat);
        g.w_i.outer_add(&dzi, &concat);
        g.w_c.outer_add(&dzg, &concat);
        g.w_o.outer_add(&dzo, &concat);
        add_assign(&mut g.b_f, &dzf);
        add_assign(&mut g.b_i, &dzi);
        add_assign(&mut g.b_c, &dzg);
        add_assign(&mut g.b_o, &dzo);

        d_concat.iter_mut().for_each(|v| *v = 0.0);
        p.w_f.matvec_t_add(&dzf, &mut d_concat);
        p.w_i.matvec_t_add(&dzi, &mut d_concat);
        p.w_c.matvec_t_add(&dzg, &mut d_concat);
        p.w_o.matvec_t_add(&dzo, &mut d_concat);

        dh_rec.copy_from_slice(&d_concat[..n]);
        d_in[t].copy_from_slice(&d_concat[n..]);
    }
    d_in
}

fn rnn_layer_backward(
    p: &RnnLayerParams,
    tape: &RnnLayerTape,
    input_seq: &[Vec<f64>],
    d_out: &[Vec<f64>],
    g: &mut RnnLayerParams,
) -> Vec<Vec<f64>> {
    let t_len = d_out.len();
    let n = p.hidden_len();
    let in_dim = input_seq[0].len();

    let mut d_in = vec![vec![0.0; in_dim]; t_len];
    let mut dh_rec = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut concat = vec![0.0; n + in_dim];
    let mut d_concat = vec![0.0; n + in_dim];
    let zeros = vec![0.0; n];

    for t in (0..t_len).rev() {
        let h = &tape.h[t];
        let h_prev = if t == 0 { &zeros } else { &tape.h[t - 1] };
        for j in 0..n {
            let dh = d_out[t][j] + dh_rec[j];
            dz[j] = dh * (1.0 - h[j] * h[j]);
        }
        concat_into(&mut concat, h_prev, &input_seq[t]);
        g.w.outer_add(&dz, &concat);
        add_assign(&mut g.b, &dz);

        d_concat.iter_mut().for_each(|v| *v = 0.0);
        p.w.matvec_t_add(&dz, &mut d_concat);
        dh_rec.copy_from_slice(&d_concat[..n]);
        d_in[t].copy_from_slice(&d_concat[n..]);
    }
    d_in
}

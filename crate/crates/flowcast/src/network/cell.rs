//! Single-step cell updates. The LSTM uses the standard gated update
//!
//!   f = sigmoid(W_f·[h, x] + b_f)      i = sigmoid(W_i·[h, x] + b_i)
//!   g = tanh(W_c·[h, x] + b_c)         C' = f ∗ C + i ∗ g
//!   o = sigmoid(W_o·[h, x] + b_o)      h' = o ∗ tanh(C')
//!
//! and the plain RNN is h' = tanh(W·[h, x] + b).

// the fused gate loops index half a dozen buffers at once; iterator zips
// would only obscure them
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::network::{CellState, LstmLayerParams, RnnLayerParams};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything one LSTM step produces; the tape keeps all of it.
pub(crate) struct LstmStep {
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn concat_into(buf: &mut Vec<f64>, h_prev: &[f64], x: &[f64]) {
    buf.clear();
    buf.extend_from_slice(h_prev);
    buf.extend_from_slice(x);
}

pub(crate) fn lstm_step(
    p: &LstmLayerParams,
    h_prev: &[f64],
    c_prev: &[f64],
    x: &[f64],
) -> LstmStep {
    let n = p.hidden_len();
    let mut concat = Vec::with_capacity(n + x.len());
    concat_into(&mut concat, h_prev, x);

    let mut f = vec![0.0; n];
    let mut i = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut o = vec![0.0; n];
    p.w_f.matvec_into(&concat, &mut f);
    p.w_i.matvec_into(&concat, &mut i);
    p.w_c.matvec_into(&concat, &mut g);
    p.w_o.matvec_into(&concat, &mut o);

    let mut c = vec![0.0; n];
    let mut tanh_c = vec![0.0; n];
    let mut h = vec![0.0; n];
    for j in 0..n {
        f[j] = sigmoid(f[j] + p.b_f[j]);
        i[j] = sigmoid(i[j] + p.b_i[j]);
        g[j] = (g[j] + p.b_c[j]).tanh();
        o[j] = sigmoid(o[j] + p.b_o[j]);
        c[j] = f[j] * c_prev[j] + i[j] * g[j];
        tanh_c[j] = c[j].tanh();
        h[j] = o[j] * tanh_c[j];
    }

    LstmStep {
        f,
        i,
        o,
        g,
        c,
        tanh_c,
        h,
    }
}

pub(crate) fn rnn_step(p: &RnnLayerParams, h_prev: &[f64], x: &[f64]) -> Vec<f64> {
    let n = p.hidden_len();
    let mut concat = Vec::with_capacity(n + x.len());
    concat_into(&mut concat, h_prev, x);
    let mut h = vec![0.0; n];
    p.w.matvec_into(&concat, &mut h);
    for j in 0..n {
        h[j] = (h[j] + p.b[j]).tanh();
    }
    h
}

/// One LSTM cell update with dimension checking.
pub fn lstm_cell(x: &[f64], prev: &CellState, p: &LstmLayerParams) -> Result<CellState> {
    let n = p.hidden_len();
    if prev.h.len() != n || prev.c.len() != n {
        return Err(Error::DimensionMismatch {
            context: "lstm_cell state",
            expected: n,
            actual: prev.h.len(),
        });
    }
    if x.len() != p.input_len() {
        return Err(Error::DimensionMismatch {
            context: "lstm_cell input",
            expected: p.input_len(),
            actual: x.len(),
        });
    }
    let step = lstm_step(p, &prev.h, &prev.c, x);
    Ok(CellState {
        h: step.h,
        c: step.c,
    })
}

/// One plain recurrent update with dimension checking.
pub fn rnn_cell(x: &[f64], prev_h: &[f64], p: &RnnLayerParams) -> Result<Vec<f64>> {
    if prev_h.len() != p.hidden_len() {
        return Err(Error::DimensionMismatch {
            context: "rnn_cell state",
            expected: p.hidden_len(),
            actual: prev_h.len(),
        });
    }
    if x.len() != p.input_len() {
        return Err(Error::DimensionMismatch {
            context: "rnn_cell input",
            expected: p.input_len(),
            actual: x.len(),
        });
    }
    Ok(rnn_step(p, prev_h, x))
}

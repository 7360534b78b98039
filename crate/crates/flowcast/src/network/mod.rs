//! Recurrent network with two output heads: an activity classifier over
//! |A|+1 classes (the extra class marks end of case) and a scalar time
//! regressor. A configurable number of bottom layers is shared between the
//! heads; the remaining layers specialize per head. Forward passes record a
//! tape for exact backpropagation through time.

mod backward;
mod cell;

pub use backward::{backward, loss, softmax};
pub(crate) use backward::{backward_at_steps, loss_at_steps};
pub use cell::{lstm_cell, rnn_cell};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodedStep;
use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};

/// Recurrent cell used by every layer of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Lstm,
    PlainRnn,
}

/// How the layer stack is arranged between the two heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// No shared layers: two separate towers read the input.
    SeparateTowers,
    /// Every layer shared: both heads read the top shared layer.
    FullyShared,
    /// Shared bottom, specialized top.
    Hybrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub total_layers: usize,
    pub shared_layers: usize,
    pub neurons: usize,
    /// |A| + 3 input features per step.
    pub input_dim: usize,
    /// |A| + 1 activity classes (last = end of case).
    pub activity_out_dim: usize,
    pub cell_kind: CellKind,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_layers < 1 {
            return Err(Error::InvalidConfig("total_layers must be >= 1".into()));
        }
        if self.shared_layers > self.total_layers {
            return Err(Error::InvalidConfig(format!(
                "shared_layers ({}) exceeds total_layers ({})",
                self.shared_layers, self.total_layers
            )));
        }
        if self.neurons < 1 {
            return Err(Error::InvalidConfig("neurons must be >= 1".into()));
        }
        if self.input_dim < 4 || self.activity_out_dim < 2 {
            return Err(Error::InvalidConfig(
                "input_dim must be |A|+3 and activity_out_dim |A|+1 with |A| >= 1".into(),
            ));
        }
        if self.input_dim - 3 != self.activity_out_dim - 1 {
            return Err(Error::InvalidConfig(format!(
                "input_dim {} and activity_out_dim {} disagree on the alphabet size",
                self.input_dim, self.activity_out_dim
            )));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        if self.shared_layers == 0 {
            Architecture::SeparateTowers
        } else if self.shared_layers == self.total_layers {
            Architecture::FullyShared
        } else {
            Architecture::Hybrid
        }
    }

    pub fn branch_layers(&self) -> usize {
        self.total_layers - self.shared_layers
    }

    /// End-of-case class position in the activity output.
    pub fn end_of_case_class(&self) -> usize {
        self.activity_out_dim - 1
    }
}

/// Gate weights and biases of one LSTM layer. Each weight matrix has shape
/// N × (N + input size of the layer); it multiplies [h_prev, x].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub w_f: Mat,
    pub w_i: Mat,
    pub w_c: Mat,
    pub w_o: Mat,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmLayerParams {
    pub fn hidden_len(&self) -> usize {
        self.b_f.len()
    }

    pub fn input_len(&self) -> usize {
        self.w_f.cols - self.hidden_len()
    }
}

/// Weights of one plain tanh recurrent layer: h = tanh(W·[h_prev, x] + b).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnLayerParams {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl RnnLayerParams {
    pub fn hidden_len(&self) -> usize {
        self.b.len()
    }

    pub fn input_len(&self) -> usize {
        self.w.cols - self.hidden_len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerParams {
    Lstm(LstmLayerParams),
    Rnn(RnnLayerParams),
}

impl LayerParams {
    pub fn hidden_len(&self) -> usize {
        match self {
            LayerParams::Lstm(p) => p.hidden_len(),
            LayerParams::Rnn(p) => p.hidden_len(),
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            LayerParams::Lstm(p) => p.input_len(),
            LayerParams::Rnn(p) => p.input_len(),
        }
    }
}

/// Affine output head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Affine {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.clone();
        for (r, slot) in out.iter_mut().enumerate() {
            *slot += dot(self.w.row(r), x);
        }
        out
    }
}

/// All learnable parameters. When shared_layers == total_layers both branch
/// stacks are empty and the heads read the top shared layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub shared_stack: Vec<LayerParams>,
    pub activity_stack: Vec<LayerParams>,
    pub time_stack: Vec<LayerParams>,
    pub activity_head: Affine,
    pub time_head: Affine,
}

/// Per-layer recurrent state: hidden vector and memory cell. Plain RNN
/// layers leave the memory cell at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(n: usize) -> Self {
        CellState {
            h: vec![0.0; n],
            c: vec![0.0; n],
        }
    }
}

const FORGET_BIAS_INIT: f64 = 1.0;

fn init_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    let scale = 1.0 / (cols as f64).sqrt();
    Mat::from_fn(rows, cols, || (2.0 * rng.gen::<f64>() - 1.0) * scale)
}

fn init_layer(kind: CellKind, n: usize, input: usize, rng: &mut ChaCha8Rng) -> LayerParams {
    match kind {
        CellKind::Lstm => LayerParams::Lstm(LstmLayerParams {
            w_f: init_mat(n, n + input, rng),
            w_i: init_mat(n, n + input, rng),
            w_c: init_mat(n, n + input, rng),
            w_o: init_mat(n, n + input, rng),
            b_f: vec![FORGET_BIAS_INIT; n],
            b_i: vec![0.0; n],
            b_c: vec![0.0; n],
            b_o: vec![0.0; n],
        }),
        CellKind::PlainRnn => LayerParams::Rnn(RnnLayerParams {
            w: init_mat(n, n + input, rng),
            b: vec![0.0; n],
        }),
    }
}

fn zero_layer_like(layer: &LayerParams) -> LayerParams {
    match layer {
        LayerParams::Lstm(p) => LayerParams::Lstm(LstmLayerParams {
            w_f: Mat::zeros(p.w_f.rows, p.w_f.cols),
            w_i: Mat::zeros(p.w_i.rows, p.w_i.cols),
            w_c: Mat::zeros(p.w_c.rows, p.w_c.cols),
            w_o: Mat::zeros(p.w_o.rows, p.w_o.cols),
            b_f: vec![0.0; p.b_f.len()],
            b_i: vec![0.0; p.b_i.len()],
            b_c: vec![0.0; p.b_c.len()],
            b_o: vec![0.0; p.b_o.len()],
        }),
        LayerParams::Rnn(p) => LayerParams::Rnn(RnnLayerParams {
            w: Mat::zeros(p.w.rows, p.w.cols),
            b: vec![0.0; p.b.len()],
        }),
    }
}

impl NetworkParams {
    /// Fresh parameters for `config`, seeded from `config.seed`. Weights are
    /// uniform in ±1/√fan_in; biases start at zero except the forget gate.
    pub fn init(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = config.neurons;
        let kind = config.cell_kind;

        let mut shared_stack = Vec::with_capacity(config.shared_layers);
        for l in 0..config.shared_layers {
            let input = if l == 0 { config.input_dim } else { n };
            shared_stack.push(init_layer(kind, n, input, &mut rng));
        }
        let branch_input = if config.shared_layers == 0 {
            config.input_dim
        } else {
            n
        };
        let branch = |rng: &mut ChaCha8Rng| {
            (0..config.branch_layers())
                .map(|l| {
                    let input = if l == 0 { branch_input } else { n };
                    init_layer(kind, n, input, rng)
                })
                .collect::<Vec<_>>()
        };
        let activity_stack = branch(&mut rng);
        let time_stack = branch(&mut rng);

        Ok(NetworkParams {
            shared_stack,
            activity_stack,
            time_stack,
            activity_head: Affine {
                w: init_mat(config.activity_out_dim, n, &mut rng),
                b: vec![0.0; config.activity_out_dim],
            },
            time_head: Affine {
                w: init_mat(1, n, &mut rng),
                b: vec![0.0; 1],
            },
        })
    }

    /// Same shapes, all zeros. Used as a gradient / moment container.
    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            shared_stack: self.shared_stack.iter().map(zero_layer_like).collect(),
            activity_stack: self.activity_stack.iter().map(zero_layer_like).collect(),
            time_stack: self.time_stack.iter().map(zero_layer_like).collect(),
            activity_head: Affine {
                w: Mat::zeros(self.activity_head.w.rows, self.activity_head.w.cols),
                b: vec![0.0; self.activity_head.b.len()],
            },
            time_head: Affine {
                w: Mat::zeros(self.time_head.w.rows, self.time_head.w.cols),
                b: vec![0.0; self.time_head.b.len()],
            },
        }
    }

    /// All parameter tensors in a fixed traversal order.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for stack in [&self.shared_stack, &self.activity_stack, &self.time_stack] {
            for layer in stack {
                match layer {
                    LayerParams::Lstm(p) => {
                        out.extend([&p.w_f.data, &p.w_i.data, &p.w_c.data, &p.w_o.data]);
                        out.extend([&p.b_f, &p.b_i, &p.b_c, &p.b_o]);
                    }
                    LayerParams::Rnn(p) => {
                        out.push(&p.w.data);
                        out.push(&p.b);
                    }
                }
            }
        }
        out.push(&self.activity_head.w.data);
        out.push(&self.activity_head.b);
        out.push(&self.time_head.w.data);
        out.push(&self.time_head.b);
        out
    }

    /// Mutable view of the same tensors, same order as `tensors`.
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for stack in [
            &mut self.shared_stack,
            &mut self.activity_stack,
            &mut self.time_stack,
        ] {
            for layer in stack.iter_mut() {
                match layer {
                    LayerParams::Lstm(p) => {
                        out.extend([
                            &mut p.w_f.data,
                            &mut p.w_i.data,
                            &mut p.w_c.data,
                            &mut p.w_o.data,
                        ]);
                        out.extend([&mut p.b_f, &mut p.b_i, &mut p.b_c, &mut p.b_o]);
                    }
                    LayerParams::Rnn(p) => {
                        out.push(&mut p.w.data);
                        out.push(&mut p.b);
                    }
                }
            }
        }
        out.push(&mut self.activity_head.w.data);
        out.push(&mut self.activity_head.b);
        out.push(&mut self.time_head.w.data);
        out.push(&mut self.time_head.b);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks parameter shapes against a config.
    pub fn validate_against(&self, config: &NetworkConfig) -> Result<()> {
        config.validate()?;
        let n = config.neurons;
        let check =
            |stack: &[LayerParams], expected_len: usize, first_input: usize, what: &'static str| {
                if stack.len() != expected_len {
                    return Err(Error::DimensionMismatch {
                        context: what,
                        expected: expected_len,
                        actual: stack.len(),
                    });
                }
                for (l, layer) in stack.iter().enumerate() {
                    let want_in = if l == 0 { first_input } else { n };
                    if layer.hidden_len() != n || layer.input_len() != want_in {
                        return Err(Error::DimensionMismatch {
                            context: what,
                            expected: want_in,
                            actual: layer.input_len(),
                        });
                    }
                    let is_lstm = matches!(layer, LayerParams::Lstm(_));
                    if is_lstm != (config.cell_kind == CellKind::Lstm) {
                        return Err(Error::InvalidConfig("cell kind mismatch".into()));
                    }
                }
                Ok(())
            };
        let branch_input = if config.shared_layers == 0 {
            config.input_dim
        } else {
            n
        };
        check(
            &self.shared_stack,
            config.shared_layers,
            config.input_dim,
            "shared stack",
        )?;
        check(
            &self.activity_stack,
            config.branch_layers(),
            branch_input,
            "activity stack",
        )?;
        check(
            &self.time_stack,
            config.branch_layers(),
            branch_input,
            "time stack",
        )?;
        if self.activity_head.w.rows != config.activity_out_dim
            || self.activity_head.w.cols != n
            || self.time_head.w.rows != 1
            || self.time_head.w.cols != n
        {
            return Err(Error::DimensionMismatch {
                context: "output heads",
                expected: n,
                actual: self.activity_head.w.cols,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Forward pass with tape

pub(crate) struct LstmLayerTape {
    pub f: Vec<Vec<f64>>,
    pub i: Vec<Vec<f64>>,
    pub o: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub tanh_c: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

pub(crate) struct RnnLayerTape {
    pub h: Vec<Vec<f64>>,
}

pub(crate) enum LayerTape {
    Lstm(LstmLayerTape),
    Rnn(RnnLayerTape),
}

impl LayerTape {
    pub(crate) fn h(&self) -> &[Vec<f64>] {
        match self {
            LayerTape::Lstm(t) => &t.h,
            LayerTape::Rnn(t) => &t.h,
        }
    }
}

/// Recorded activations of one forward pass.
pub struct Tape {
    pub(crate) inputs: Vec<Vec<f64>>,
    pub(crate) shared: Vec<LayerTape>,
    pub(crate) activity: Vec<LayerTape>,
    pub(crate) time: Vec<LayerTape>,
}

/// Outputs of a forward pass: per-step activity logits (softmax is applied
/// downstream) and per-step raw time predictions, plus the tape.
pub struct Forward {
    pub activity_logits: Vec<Vec<f64>>,
    pub time_preds: Vec<f64>,
    pub tape: Tape,
}

fn run_layer(layer: &LayerParams, inputs: &[Vec<f64>]) -> LayerTape {
    let n = layer.hidden_len();
    let t_len = inputs.len();
    match layer {
        LayerParams::Lstm(p) => {
            let mut tape = LstmLayerTape {
                f: Vec::with_capacity(t_len),
                i: Vec::with_capacity(t_len),
                o: Vec::with_capacity(t_len),
                g: Vec::with_capacity(t_len),
                c: Vec::with_capacity(t_len),
                tanh_c: Vec::with_capacity(t_len),
                h: Vec::with_capacity(t_len),
            };
            let mut state = CellState::zeros(n);
            for x in inputs {
                let step = cell::lstm_step(p, &state.h, &state.c, x);
                state.h = step.h.clone();
                state.c = step.c.clone();
                tape.f.push(step.f);
                tape.i.push(step.i);
                tape.o.push(step.o);
                tape.g.push(step.g);
                tape.c.push(step.c);
                tape.tanh_c.push(step.tanh_c);
                tape.h.push(step.h);
            }
            LayerTape::Lstm(tape)
        }
        LayerParams::Rnn(p) => {
            let mut h = vec![0.0; n];
            let mut tape = RnnLayerTape {
                h: Vec::with_capacity(t_len),
            };
            for x in inputs {
                h = cell::rnn_step(p, &h, x);
                tape.h.push(h.clone());
            }
            LayerTape::Rnn(tape)
        }
    }
}

fn run_stack(stack: &[LayerParams], inputs: &[Vec<f64>]) -> Vec<LayerTape> {
    let mut tapes: Vec<LayerTape> = Vec::with_capacity(stack.len());
    for layer in stack {
        let tape = {
            let input_seq = tapes.last().map(|t| t.h()).unwrap_or(inputs);
            run_layer(layer, input_seq)
        };
        tapes.push(tape);
    }
    tapes
}

fn stack_top<'a>(tapes: &'a [LayerTape], fallback: &'a [Vec<f64>]) -> &'a [Vec<f64>] {
    tapes.last().map(|t| t.h()).unwrap_or(fallback)
}

/// Runs the network over an encoded step sequence, recording the tape.
pub fn forward(
    params: &NetworkParams,
    config: &NetworkConfig,
    steps: &[EncodedStep],
) -> Result<Forward> {
    if steps.is_empty() {
        return Err(Error::EmptyInput("forward"));
    }
    params.validate_against(config)?;
    for step in steps {
        if step.features.len() != config.input_dim {
            return Err(Error::DimensionMismatch {
                context: "forward input",
                expected: config.input_dim,
                actual: step.features.len(),
            });
        }
    }

    let inputs: Vec<Vec<f64>> = steps.iter().map(|s| s.features.clone()).collect();
    let shared = run_stack(&params.shared_stack, &inputs);
    let shared_out = stack_top(&shared, &inputs);
    let activity = run_stack(&params.activity_stack, shared_out);
    let time = run_stack(&params.time_stack, shared_out);

    let activity_top = stack_top(&activity, shared_out);
    let time_top = stack_top(&time, shared_out);
    let activity_logits: Vec<Vec<f64>> = activity_top
        .iter()
        .map(|h| params.activity_head.apply(h))
        .collect();
    let time_preds: Vec<f64> = time_top
        .iter()
        .map(|h| params.time_head.apply(h)[0])
        .collect();

    Ok(Forward {
        activity_logits,
        time_preds,
        tape: Tape {
            inputs,
            shared,
            activity,
            time,
        },
    })
}

// ---------------------------------------------------------------------------
// Streaming forward (no tape) for iterative rollout

/// Carried recurrent state for step-at-a-time inference.
pub struct StreamState {
    shared: Vec<CellState>,
    activity: Vec<CellState>,
    time: Vec<CellState>,
}

impl NetworkParams {
    pub fn stream_start(&self) -> StreamState {
        let states = |stack: &[LayerParams]| {
            stack
                .iter()
                .map(|l| CellState::zeros(l.hidden_len()))
                .collect::<Vec<_>>()
        };
        StreamState {
            shared: states(&self.shared_stack),
            activity: states(&self.activity_stack),
            time: states(&self.time_stack),
        }
    }

    /// Feeds one input vector and returns (activity logits, raw time output).
    /// Produces bit-identical results to `forward` over the same sequence.
    pub fn stream_step(&self, state: &mut StreamState, x: &[f64]) -> (Vec<f64>, f64) {
        fn advance(stack: &[LayerParams], states: &mut [CellState], input: Vec<f64>) -> Vec<f64> {
            let mut current = input;
            for (layer, st) in stack.iter().zip(states.iter_mut()) {
                match layer {
                    LayerParams::Lstm(p) => {
                        let step = cell::lstm_step(p, &st.h, &st.c, &current);
                        st.h = step.h;
                        st.c = step.c;
                    }
                    LayerParams::Rnn(p) => {
                        st.h = cell::rnn_step(p, &st.h, &current);
                    }
                }
                current = st.h.clone();
            }
            current
        }

        let shared_out = advance(&self.shared_stack, &mut state.shared, x.to_vec());
        let act_top = advance(
            &self.activity_stack,
            &mut state.activity,
            shared_out.clone(),
        );
        let time_top = advance(&self.time_stack, &mut state.time, shared_out);
        let logits = self.activity_head.apply(&act_top);
        let time = self.time_head.apply(&time_top)[0];
        (logits, time)
    }
}

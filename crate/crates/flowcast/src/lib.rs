//! Sequence prediction over business-process event logs.
//!
//! Given a log of completed cases, the crate trains a recurrent network
//! (LSTM or plain RNN) that jointly predicts the next activity of a running
//! case and the time until it, rolls that model forward to predict the full
//! remaining suffix and the remaining cycle time, and evaluates everything
//! against annotated transition-system baselines.

pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod encoding;
pub mod error;
pub mod evaluate;
pub mod eventlog;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod prediction;
pub mod training;

pub use error::{Error, Result};

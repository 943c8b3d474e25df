//! Sample-wise stateful LSTM training for sporadic event detection.
//!
//! The crate trains two-layer stateful LSTMs that emit one class
//! probability vector per timestamp, carrying hidden/cell state across
//! training windows so context is not limited by the window length.
//! On top of the plain forward model it implements three training
//! strategies for sporadic (rare, non-periodic) events:
//!
//! - **delay**: predict the label of timestamp `t` only after seeing
//!   `delta` further samples, trading latency for lookahead,
//! - **inverse**: train on time-reversed sequences so each prediction
//!   is conditioned on the sequence's future,
//! - **hyper-parameter-as-variable batching**: window length, batch
//!   size and lane offsets drawn per epoch/batch to decorrelate
//!   epoch snapshots,
//!
//! plus epoch-wise bagging: parameter snapshots taken after each epoch
//! become ensemble members whose probability rows are averaged
//! (score-level fusion) before the argmax.
//!
//! Everything is deterministic given a seed: the linear algebra fixes
//! its reduction order, and all randomness flows through named
//! counter-based streams.

pub mod checkpoint;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod rng;
pub mod training;
pub mod variants;

pub use error::{Error, ErrorCategory, Result};
pub use matrix::Matrix;
pub use rng::RngStream;

//! Multimodal fusion framework for multi-class credit-rating prediction.
//!
//! The crate combines four numerical feature channels (bond, financial
//! ratios, market, covariate) with an earnings-call text channel and
//! evaluates 16 fusion architectures: four fusion strategies (simple or
//! hybrid level, concatenation or cross-attention technique) crossed with
//! four base models (CNN, LSTM, GRU, attention).
//!
//! Everything runs on a small reverse-mode autodiff engine in [`tensor`];
//! no external ML runtime is required. Training, evaluation (weighted
//! one-vs-rest AUC, F1, bootstrap CIs, slice breakdowns), corpus analytics
//! and an experiment runner live in the remaining modules.

pub mod data;
pub mod experiment;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod textstats;
pub mod train;

pub use tensor::{Tensor, TensorError};

//! Core library for a convolutional-LSTM residual network that classifies
//! short frame sequences as pristine or manipulated from their temporal
//! inconsistencies.
//!
//! The crate is self-contained: a dense f64 tensor type with tape-based
//! reverse-mode differentiation, the recurrent residual model, a synthetic
//! sequence corpus with controlled temporal artifacts, and the training,
//! metrics and transfer-learning machinery around them. The companion CLI
//! crate adds file handling and batch orchestration.

pub mod error;
pub mod rng;
pub mod tensor;
pub mod ops;
pub mod tape;
pub mod findiff;
pub mod convlstm;
pub mod blocks;
pub mod model;
pub mod data;
pub mod synth;
pub mod train;
pub mod metrics;
pub mod transfer;

pub use error::{Error, Result};
pub use tensor::Tensor;

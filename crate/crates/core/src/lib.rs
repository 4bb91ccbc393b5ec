//! Pointer-generator abstractive summarization for Ge'ez-script text:
//! corpus handling, skip-gram embeddings, a bidirectional-LSTM encoder with
//! an attentive copy-capable decoder, scheduled-sampling training and
//! ROUGE/BLEU scoring.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the gradient checks require.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// backprop loops index several parallel buffers at once
#![allow(clippy::needless_range_loop)]

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor2D<f64>;
pub type Model = model::ModelParams<f64>;
pub type Checkpoint = model::Checkpoint<f64>;
pub type Embeddings = embedding::EmbeddingTable<f64>;
pub type Gradient = gradcheck::GradientRecord<f64>;
pub type Optimizer = trainer::Adagrad<f64>;

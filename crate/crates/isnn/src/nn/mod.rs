//! Minimal dense/convolutional network engine with reverse-mode backprop.
//!
//! Everything is f64 and deterministic: forward on an immutable [`Model`] is a
//! pure function of (parameters, batch), and gradient accumulation reduces
//! fixed-size sample chunks in index order so results do not depend on thread
//! count.

pub mod check;
mod gemm;
mod loss;
mod model;
mod optim;
mod tensor;

pub use loss::{softmax, softmax_cross_entropy, softmax_xent_grad};
pub use model::{cnn_s, Cache, LayerSpec, Model};
pub use optim::OptimizerState;
pub use tensor::Tensor;

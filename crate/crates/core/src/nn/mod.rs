//! Minimal deterministic neural-network engine.
//!
//! Layers implement [`Layer`]: `forward` caches activations and `backward`
//! accumulates parameter gradients into the [`ParamStore`] while returning the
//! gradient with respect to the input. Everything runs in f64.

pub mod checkpoint;
pub mod init;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod store;
pub mod tensor;

pub use layers::{
    sigmoid, softmax_rows, BatchNorm1d, Conv1d, Dense, Dropout, GlobalAvgPool, Layer, MaxPool3, Mode, Relu, Sigmoid,
    SoftmaxClasses,
};
pub use loss::{bce_with_logits, mse, softmax_cross_entropy};
pub use lstm::{Lstm, LstmOutput};
pub use optim::{cosine_lr, AdamState};
pub use store::{BufferKind, ParamId, ParamStore};
pub use tensor::Tensor;

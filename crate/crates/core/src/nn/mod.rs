//! Minimal dense network: input → ReLU hidden layers → K logits.
//!
//! Forward and backward passes are coded by hand over row-major batches
//! (one sample per row). Training is full-batch SGD with heavy-ball
//! momentum.

mod model;
mod optim;
mod prob;

pub use model::{backward, backward_weighted, Dense, ModelParams};
pub use optim::{sgd_step, OptimizerState};
pub(crate) use prob::argmax;
pub use prob::{cross_entropy, softmax, softmax_rows, Logits, ProbabilityVector, LOG_EPS};

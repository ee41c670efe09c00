//! Class-imbalanced federated semi-supervised learning at desk scale.
//!
//! The crate simulates a federation of clients that each hold a handful of
//! labeled samples and a larger unlabeled pool, and trains a small MLP with
//! three local/global recipes:
//!
//! - labeled-only FedAvg,
//! - FixMatch-style thresholded pseudo-labeling over FedAvg,
//! - FedDB: pseudo-labels debiased by the average prediction probability on
//!   unlabeled data (APP-U), plus aggregation weights chosen so the weighted
//!   APP-U is as close to uniform as possible.
//!
//! Modules are layered bottom-up: [`nn`] → [`data`] → [`ssl`] → [`fed`],
//! with [`metrics`] for evaluation and [`cli`] for configuration and sweeps.

pub mod cli;
pub mod data;
pub mod error;
pub mod fed;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod ssl;

pub use error::{Error, Result};

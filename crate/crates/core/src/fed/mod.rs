//! The federation protocol: client sampling, local updates, and aggregation
//! by plain averaging or by debiased (APP-U balancing) weights.

mod aggregate;
mod client;
mod server;

use std::fmt;
use std::str::FromStr;

pub use aggregate::{aggregation_loss, aggregation_loss_grad, dma, dma_weights, fedavg_aggregate, AggregationWeights, DmaOutcome};
pub use client::{client_update, ClientState, ClientUpdate};
pub use server::{run_experiment, select_clients, ExperimentFailure, ExperimentRun, Federation, ServerState};

use crate::error::{Error, Result};
use crate::ssl::SslHyperParams;

/// Training recipe for one arm of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// FedAvg on labeled data only.
    FedAvgLabeledOnly,
    /// Thresholded pseudo-labeling with FedAvg.
    FixMatch,
    /// Debiased pseudo-labeling with debiased aggregation.
    FedDb,
    /// FixMatch with debiased pseudo-labeling plugged in.
    FixMatchDpl,
    /// FedDB with plain averaging instead of debiased aggregation.
    FedDbNoDma,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::FedAvgLabeledOnly,
        Method::FixMatch,
        Method::FedDb,
        Method::FixMatchDpl,
        Method::FedDbNoDma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FedAvgLabeledOnly => "fedavg_labeled_only",
            Method::FixMatch => "fixmatch",
            Method::FedDb => "feddb",
            Method::FixMatchDpl => "fixmatch+dpl",
            Method::FedDbNoDma => "feddb_no_dma",
        }
    }

    pub fn uses_unlabeled(self) -> bool {
        !matches!(self, Method::FedAvgLabeledOnly)
    }

    pub fn debiases_pseudo_labels(self) -> bool {
        matches!(self, Method::FedDb | Method::FixMatchDpl | Method::FedDbNoDma)
    }

    pub fn debiases_aggregation(self) -> bool {
        matches!(self, Method::FedDb)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedHyperParams {
    /// Total client count M.
    pub clients: usize,
    /// Fraction C of clients active per round.
    pub activation_rate: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub aggr_epochs: usize,
    pub lr: f64,
    pub lr_aggr: f64,
    pub momentum: f64,
    pub ssl: SslHyperParams,
    pub method: Method,
    /// Replace every APP-U estimate by the uniform distribution. Makes the
    /// debiasing steps inert; used to check they reduce to the baseline.
    pub force_uniform_appu: bool,
}

impl FedHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::config("need at least one client"));
        }
        if !(self.activation_rate > 0.0 && self.activation_rate <= 1.0) {
            return Err(Error::config(format!(
                "activation rate must lie in (0, 1], got {}",
                self.activation_rate
            )));
        }
        if (self.clients as f64 * self.activation_rate).round() < 1.0 {
            return Err(Error::config("activation rate selects no clients"));
        }
        if self.aggr_epochs == 0 {
            return Err(Error::config("aggregation epochs must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_aggr > 0.0 && self.lr_aggr.is_finite()) {
            return Err(Error::config("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        self.ssl.validate()
    }

    /// Number of clients drawn each round: round(M·C), at least 1.
    pub fn clients_per_round(&self) -> usize {
        ((self.clients as f64 * self.activation_rate).round() as usize).clamp(1, self.clients)
    }
}

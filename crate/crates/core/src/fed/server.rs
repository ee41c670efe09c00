use std::fmt;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::aggregate::{dma, fedavg_aggregate, AggregationWeights};
use super::client::{client_update, ClientState, ClientUpdate};
use super::{FedHyperParams, Method};
use crate::cli::ExperimentConfig;
use crate::data::{generate_synthetic, partition, Augmentation, ClientDatasets, Corpus};
use crate::error::{Error, Result};
use crate::metrics::{classwise_accuracy, js_divergence, label_distribution, pseudo_metrics, PseudoCounts, RoundMetrics};
use crate::nn::{ModelParams, ProbabilityVector};
use crate::rng::{run_stream, Purpose, StreamRng};

/// Uniform sample without replacement of round(M·C) client indices, sorted.
pub fn select_clients<R: Rng + ?Sized>(clients: usize, activation_rate: f64, rng: &mut R) -> Vec<usize> {
    let n = ((clients as f64 * activation_rate).round() as usize).clamp(1, clients);
    let mut picked = index::sample(rng, clients, n).into_vec();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub global: ModelParams,
    /// Completed rounds.
    pub round: usize,
    sampler: StreamRng,
}

/// A configured federation that can be stepped one round at a time.
#[derive(Debug, Clone)]
pub struct Federation {
    hyper: FedHyperParams,
    aug: Augmentation,
    run_seed: u64,
    server: ServerState,
    clients: Vec<ClientState>,
    test: Corpus,
}

struct LocalResult {
    update: ClientUpdate,
    js_appu: f64,
    js_labels: f64,
    pseudo: Option<PseudoCounts>,
}

impl Federation {
    pub fn new(
        initial: ModelParams,
        client_data: Vec<ClientDatasets>,
        test: Corpus,
        hyper: FedHyperParams,
        aug: Augmentation,
        run_seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        aug.validate()?;
        if client_data.len() != hyper.clients {
            return Err(Error::config(format!(
                "{} client datasets for {} clients",
                client_data.len(),
                hyper.clients
            )));
        }
        if test.num_classes != initial.num_classes() || test.dim() != initial.input_dim() {
            return Err(Error::config("test set does not match the model shape"));
        }
        let classes = initial.num_classes();
        let clients = client_data
            .into_iter()
            .enumerate()
            .map(|(id, data)| ClientState::new(id, data, classes, hyper.ssl.gamma))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            server: ServerState {
                global: initial,
                round: 0,
                sampler: run_stream(run_seed, Purpose::ClientSampling),
            },
            hyper,
            aug,
            run_seed,
            clients,
            test,
        })
    }

    /// Generates data, partitions it and initializes the model for one run.
    pub fn from_config(config: &ExperimentConfig, method: Method, run_seed: u64) -> Result<Self> {
        config.validate()?;
        let data = generate_synthetic(&config.synthetic_spec(run_seed)?)?;
        let clients = partition(&data.train, &config.partition_spec(run_seed))?;
        let initial = ModelParams::init(
            config.dim,
            &config.hidden,
            config.classes,
            &mut run_stream(run_seed, Purpose::ModelInit),
        )?;
        Self::new(initial, clients, data.test, config.hyper_for(method), config.augmentation(), run_seed)
    }

    pub fn global(&self) -> &ModelParams {
        &self.server.global
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn hyper(&self) -> &FedHyperParams {
        &self.hyper
    }

    /// Select → local updates → aggregate → evaluate.
    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let round = self.server.round + 1;
        let selected = select_clients(self.hyper.clients, self.hyper.activation_rate, &mut self.server.sampler);

        let global = &self.server.global;
        let (hyper, aug, seed, test) = (&self.hyper, &self.aug, self.run_seed, &self.test);
        let classes = global.num_classes();
        let results: Vec<Result<LocalResult>> = self
            .clients
            .par_iter_mut()
            .filter(|c| selected.binary_search(&c.id).is_ok())
            .map(|client| {
                let update = client_update(global, client, hyper, aug, seed, round)?;
                let bias = classwise_accuracy(&update.model, test)?.bias_distribution();
                let labels = label_distribution(&client.data.labeled, classes);
                let pseudo = update
                    .pseudo
                    .as_ref()
                    .map(|p| pseudo_metrics(p, &client.data.hidden))
                    .transpose()?;
                Ok(LocalResult {
                    js_appu: js_divergence(&update.appu, &bias),
                    js_labels: js_divergence(&labels, &bias),
                    update,
                    pseudo,
                })
            })
            .collect();
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;

        let n = results.len() as f64;
        let js_appu = results.iter().map(|r| r.js_appu).sum::<f64>() / n;
        let js_labels = results.iter().map(|r| r.js_labels).sum::<f64>() / n;
        let pseudo = results
            .iter()
            .filter_map(|r| r.pseudo)
            .reduce(PseudoCounts::merge);
        let (models, appus): (Vec<ModelParams>, Vec<ProbabilityVector>) =
            results.into_iter().map(|r| (r.update.model, r.update.appu)).unzip();

        let (next, l_init, l_final) = if self.hyper.method.debiases_aggregation() {
            let out = dma(&models, &appus, self.hyper.aggr_epochs, self.hyper.lr_aggr)?;
            (out.model, Some(out.initial_loss), Some(out.final_loss))
        } else {
            (fedavg_aggregate(&models, &AggregationWeights::uniform(models.len()))?, None, None)
        };
        if !next.is_finite() {
            return Err(Error::Numerical(format!("aggregated model is non-finite in round {round}")));
        }
        self.server.global = next;
        self.server.round = round;

        let acc = classwise_accuracy(&self.server.global, &self.test)?;
        Ok(RoundMetrics {
            round,
            balanced_test_accuracy: acc.balanced,
            classwise_accuracy: acc.per_class,
            js_appu_vs_truth: js_appu,
            js_labeldist_vs_truth: js_labels,
            pseudo_accuracy: pseudo.and_then(|p| p.accuracy()),
            pseudo_ratio: pseudo.map_or(0.0, |p| p.ratio()),
            l_aggr_initial: l_init,
            l_aggr_final: l_final,
        })
    }

    /// Runs the remaining rounds; a failure carries the log so far.
    pub fn run(mut self) -> std::result::Result<ExperimentRun, ExperimentFailure> {
        let mut log = Vec::with_capacity(self.hyper.rounds);
        while self.server.round < self.hyper.rounds {
            match self.run_round() {
                Ok(m) => log.push(m),
                Err(error) => return Err(ExperimentFailure { error, log }),
            }
        }
        Ok(ExperimentRun {
            method: self.hyper.method,
            run_seed: self.run_seed,
            classes: self.test.num_classes,
            log,
            final_model: self.server.global,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub method: Method,
    pub run_seed: u64,
    pub classes: usize,
    pub log: Vec<RoundMetrics>,
    pub final_model: ModelParams,
}

impl ExperimentRun {
    /// Highest balanced test accuracy over all rounds.
    pub fn best_balanced_accuracy(&self) -> Option<f64> {
        self.log
            .iter()
            .map(|m| m.balanced_test_accuracy)
            .reduce(f64::max)
    }
}

/// A run that stopped early, with the rounds it completed.
#[derive(Debug)]
pub struct ExperimentFailure {
    pub error: Error,
    pub log: Vec<RoundMetrics>,
}

impl fmt::Display for ExperimentFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} completed rounds)", self.error, self.log.len())
    }
}

impl std::error::Error for ExperimentFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// One full run of `method` under `run_seed`.
pub fn run_experiment(
    config: &ExperimentConfig,
    method: Method,
    run_seed: u64,
) -> std::result::Result<ExperimentRun, ExperimentFailure> {
    Federation::from_config(config, method, run_seed)
        .map_err(|error| ExperimentFailure { error, log: Vec::new() })?
        .run()
}

use super::FedHyperParams;
use crate::data::{Augmentation, ClientDatasets};
use crate::error::{Error, Result};
use crate::nn::{sgd_step, ModelParams, OptimizerState, ProbabilityVector};
use crate::rng::{client_stream, Purpose};
use crate::ssl::{
    assign_pseudo_labels, compute_appu, mean_prediction, supervised_loss, total_loss, unsupervised_loss,
    weak_predictions, AppU, PseudoLabelSet,
};

/// Persistent per-client state. The APP-U accumulator survives across
/// rounds, including rounds where the client is not selected.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub data: ClientDatasets,
    pub appu: AppU,
}

impl ClientState {
    pub fn new(id: usize, data: ClientDatasets, classes: usize, gamma: f64) -> Result<Self> {
        Ok(Self {
            id,
            data,
            appu: AppU::new(classes, gamma)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub model: ModelParams,
    /// Accumulated APP-U after local training.
    pub appu: ProbabilityVector,
    /// Pseudo-labels used this round (SSL methods only).
    pub pseudo: Option<PseudoLabelSet>,
}

/// Local training for one round.
///
/// Pseudo-labels come from the received global model once, before the
/// epoch loop, and stay fixed for all `E` epochs. Each epoch re-estimates
/// APP-U on the current local model and folds it into the accumulator.
pub fn client_update(
    global: &ModelParams,
    client: &mut ClientState,
    hyper: &FedHyperParams,
    aug: &Augmentation,
    run_seed: u64,
    round: usize,
) -> Result<ClientUpdate> {
    let data = &client.data;
    if data.labeled.is_empty() {
        return Err(Error::config(format!("client {} has no labeled samples", client.id)));
    }
    let method = hyper.method;
    if method.uses_unlabeled() && data.unlabeled.is_empty() {
        return Err(Error::config(format!("client {} has no unlabeled samples", client.id)));
    }

    let mut local = global.clone();
    if hyper.local_epochs == 0 {
        return Ok(ClientUpdate {
            model: local,
            appu: client.appu.mean().clone(),
            pseudo: None,
        });
    }

    let classes = global.num_classes();
    let uniform = ProbabilityVector::uniform(classes);
    let stream = |purpose| client_stream(run_seed, client.id, round, purpose);

    let mut pseudo = None;
    if !data.unlabeled.is_empty() {
        let probs = weak_predictions(&local, &data.unlabeled, aug, &mut stream(Purpose::PseudoLabel))?;
        let fresh = if hyper.force_uniform_appu {
            uniform.clone()
        } else {
            mean_prediction(probs.view())?
        };
        client.appu.seed(&fresh);
        if method.uses_unlabeled() {
            let prior = method.debiases_pseudo_labels().then_some(&fresh);
            pseudo = Some(assign_pseudo_labels(probs.view(), prior, hyper.ssl.tau));
        }
    }

    let mut opt = OptimizerState::new(&local, hyper.lr, hyper.momentum)?;
    let mut appu_rng = stream(Purpose::AppU);
    let mut weak_rng = stream(Purpose::WeakLabeled);
    let mut strong_rng = stream(Purpose::StrongUnlabeled);
    let lambda = hyper.ssl.lambda;

    for _ in 0..hyper.local_epochs {
        let fresh = if data.unlabeled.is_empty() {
            None
        } else if hyper.force_uniform_appu {
            Some(uniform.clone())
        } else {
            Some(compute_appu(&local, &data.unlabeled, aug, &mut appu_rng)?)
        };

        let supervised = supervised_loss(&local, &data.labeled, aug, &mut weak_rng)?;
        let step = match (&pseudo, method) {
            (Some(labels), m) if m.uses_unlabeled() && lambda > 0.0 => {
                let unsupervised = unsupervised_loss(&local, &data.unlabeled, labels, aug, &mut strong_rng)?;
                total_loss(&supervised, &unsupervised, lambda)
            }
            _ => supervised,
        };
        sgd_step(&mut local, &step.grad, &mut opt)
            .map_err(|e| annotate(e, client.id, round))?;

        if let Some(fresh) = fresh {
            client.appu.accumulate(&fresh);
        }
    }

    Ok(ClientUpdate {
        model: local,
        appu: client.appu.mean().clone(),
        pseudo,
    })
}

fn annotate(e: Error, client: usize, round: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("client {client}, round {round}: {msg}")),
        other => other,
    }
}


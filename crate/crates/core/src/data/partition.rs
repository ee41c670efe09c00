use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::synthetic::Corpus;
use super::Sample;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

const MAX_RETRIES: usize = 100;

/// How class mass is spread across clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Heterogeneity {
    Iid,
    /// Per-class client proportions drawn from `Dir(δ·1_M)`; larger δ is
    /// closer to IID.
    Dirichlet(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub clients: usize,
    pub heterogeneity: Heterogeneity,
    pub classes: usize,
    pub labeled_total: usize,
    pub unlabeled_total: usize,
    pub seed: u64,
    /// Draw labeled and unlabeled client proportions independently.
    pub independent_unlabeled_draw: bool,
}

/// Labeled samples visible to training.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Unlabeled pool as training code sees it: features only.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSet {
    pub features: Array2<f64>,
}

impl UnlabeledSet {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }
}

/// True labels of an unlabeled pool, kept apart from [`UnlabeledSet`] so
/// that training code cannot reach them. Only evaluation reads these.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLabels(Vec<usize>);

impl HiddenLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn reveal(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDatasets {
    pub labeled: LabeledSet,
    /// Own unlabeled draw followed by label-free copies of `labeled`.
    pub unlabeled: UnlabeledSet,
    pub hidden: HiddenLabels,
    own_unlabeled: usize,
}

impl ClientDatasets {
    pub fn new(labeled: LabeledSet, own_unlabeled: UnlabeledSet, own_hidden: Vec<usize>) -> Result<Self> {
        if own_hidden.len() != own_unlabeled.len() {
            return Err(Error::config("hidden labels must align with the unlabeled pool"));
        }
        let own = own_unlabeled.len();
        let features = concatenate(Axis(0), &[own_unlabeled.features.view(), labeled.features.view()])
            .map_err(|e| Error::config(format!("feature dimensions disagree: {e}")))?;
        let mut hidden = own_hidden;
        hidden.extend_from_slice(&labeled.labels);
        Ok(Self {
            labeled,
            unlabeled: UnlabeledSet { features },
            hidden: HiddenLabels(hidden),
            own_unlabeled: own,
        })
    }

    /// Unlabeled samples assigned by the partition, excluding the copies of
    /// the labeled set.
    pub fn own_unlabeled_count(&self) -> usize {
        self.own_unlabeled
    }

    /// Samples this client was assigned from the corpus (labeled ones with
    /// labels, own unlabeled ones without).
    pub fn assigned_samples(&self) -> Vec<Sample> {
        let labeled = self
            .labeled
            .features
            .rows()
            .into_iter()
            .zip(&self.labeled.labels)
            .map(|(x, &y)| Sample {
                x: x.to_vec(),
                label: Some(y),
            });
        let unlabeled = self
            .unlabeled
            .features
            .rows()
            .into_iter()
            .take(self.own_unlabeled)
            .map(|x| Sample {
                x: x.to_vec(),
                label: None,
            });
        labeled.chain(unlabeled).collect()
    }
}

fn dirichlet_proportions<R: Rng + ?Sized>(clients: usize, concentration: f64, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::config(format!("invalid Dirichlet concentration {concentration}: {e}")))?;
    // tiny concentrations can underflow every draw to zero
    for _ in 0..MAX_RETRIES {
        let draws: Vec<f64> = (0..clients).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return Ok(draws.into_iter().map(|g| g / sum).collect());
        }
    }
    Err(Error::config(format!("Dirichlet concentration {concentration} too small to sample")))
}

/// Splits `n` items into `proportions.len()` consecutive chunk sizes using
/// floored cumulative boundaries.
fn split_counts(n: usize, proportions: &[f64]) -> Vec<usize> {
    let mut counts = Vec::with_capacity(proportions.len());
    let mut cum = 0.0;
    let mut prev = 0usize;
    for (i, p) in proportions.iter().enumerate() {
        cum += p;
        let edge = if i + 1 == proportions.len() {
            n
        } else {
            ((cum * n as f64).floor() as usize).clamp(prev, n)
        };
        counts.push(edge - prev);
        prev = edge;
    }
    counts
}

/// Per-class index lists (already shuffled) split across clients.
fn assign<R: Rng + ?Sized>(
    by_class: &[Vec<usize>],
    clients: usize,
    heterogeneity: Heterogeneity,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let mut out = vec![Vec::new(); clients];
    for indices in by_class {
        let proportions = match heterogeneity {
            Heterogeneity::Iid => vec![1.0 / clients as f64; clients],
            Heterogeneity::Dirichlet(delta) => dirichlet_proportions(clients, delta, rng)?,
        };
        let mut start = 0;
        for (client, count) in split_counts(indices.len(), &proportions).into_iter().enumerate() {
            out[client].extend_from_slice(&indices[start..start + count]);
            start += count;
        }
    }
    Ok(out)
}

fn validate(corpus: &Corpus, spec: &PartitionSpec) -> Result<()> {
    if spec.clients == 0 {
        return Err(Error::config("need at least one client"));
    }
    if spec.classes != corpus.num_classes {
        return Err(Error::config("partition class count does not match corpus"));
    }
    if let Heterogeneity::Dirichlet(delta) = spec.heterogeneity {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::config(format!("Dirichlet δ must be positive, got {delta}")));
        }
    }
    if spec.labeled_total < spec.classes || !spec.labeled_total.is_multiple_of(spec.classes) {
        return Err(Error::config(format!(
            "labeled_total {} must be a positive multiple of the class count {}",
            spec.labeled_total, spec.classes
        )));
    }
    if spec.labeled_total < spec.clients {
        return Err(Error::config("fewer labeled samples than clients"));
    }
    if spec.labeled_total + spec.unlabeled_total != corpus.len() {
        return Err(Error::config(format!(
            "labeled_total + unlabeled_total = {} but corpus has {} samples",
            spec.labeled_total + spec.unlabeled_total,
            corpus.len()
        )));
    }
    let per_class = spec.labeled_total / spec.classes;
    if let Some(k) = corpus.class_counts().iter().position(|&c| c < per_class) {
        return Err(Error::config(format!("class {k} has fewer than {per_class} samples")));
    }
    Ok(())
}

fn gather(corpus: &Corpus, rows: &[usize]) -> (Array2<f64>, Vec<usize>) {
    (
        corpus.features.select(Axis(0), rows),
        rows.iter().map(|&r| corpus.labels[r]).collect(),
    )
}

/// Splits a corpus into a globally balanced labeled pool and an unlabeled
/// remainder, then spreads both across clients.
///
/// Every client ends up with at least one labeled sample; the labeled draw
/// is repeated up to 100 times to achieve this.
pub fn partition(corpus: &Corpus, spec: &PartitionSpec) -> Result<Vec<ClientDatasets>> {
    validate(corpus, spec)?;
    let mut rng = stream(&[spec.seed, Purpose::Partition as u64]);

    let per_class = spec.labeled_total / spec.classes;
    let mut labeled_by_class = vec![Vec::new(); spec.classes];
    let mut unlabeled_by_class = vec![Vec::new(); spec.classes];
    for k in 0..spec.classes {
        let mut members: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.labels[i] == k).collect();
        members.shuffle(&mut rng);
        unlabeled_by_class[k] = members.split_off(per_class);
        labeled_by_class[k] = members;
    }

    let mut labeled_assignment = None;
    let mut last_empty = 0;
    for _ in 0..MAX_RETRIES {
        let candidate = assign(&labeled_by_class, spec.clients, spec.heterogeneity, &mut rng)?;
        match candidate.iter().position(Vec::is_empty) {
            Some(client) => last_empty = client,
            None => {
                labeled_assignment = Some(candidate);
                break;
            }
        }
    }
    let labeled_assignment = labeled_assignment.ok_or(Error::Partition {
        client: last_empty,
        retries: MAX_RETRIES,
    })?;

    let unlabeled_assignment = if spec.independent_unlabeled_draw {
        assign(&unlabeled_by_class, spec.clients, spec.heterogeneity, &mut rng)?
    } else {
        // reuse each client's labeled class proportions
        let mut out = vec![Vec::new(); spec.clients];
        for (k, indices) in unlabeled_by_class.iter().enumerate() {
            let shares: Vec<f64> = labeled_assignment
                .iter()
                .map(|rows| rows.iter().filter(|&&r| corpus.labels[r] == k).count() as f64)
                .collect();
            let total: f64 = shares.iter().sum();
            let proportions: Vec<f64> = shares.iter().map(|s| s / total).collect();
            let mut start = 0;
            for (client, count) in split_counts(indices.len(), &proportions).into_iter().enumerate() {
                out[client].extend_from_slice(&indices[start..start + count]);
                start += count;
            }
        }
        out
    };

    labeled_assignment
        .iter()
        .zip(&unlabeled_assignment)
        .map(|(lab, unl)| {
            let (lx, ly) = gather(corpus, lab);
            let (ux, uy) = gather(corpus, unl);
            ClientDatasets::new(
                LabeledSet {
                    features: lx,
                    labels: ly,
                },
                UnlabeledSet { features: ux },
                uy,
            )
        })
        .collect()
}

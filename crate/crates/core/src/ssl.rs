//! Client-side semi-supervised machinery.
//!
//! APP-U (the average prediction over weak views of the unlabeled pool)
//! estimates the label prior the model has absorbed. Debiased pseudo-labeling
//! divides each prediction by that prior and renormalizes before applying the
//! confidence threshold; the baseline path thresholds raw predictions.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::data::{Augmentation, LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::nn::{backward, backward_weighted, ModelParams, ProbabilityVector};

/// Floor applied to prior entries before dividing by them.
pub const PRIOR_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslHyperParams {
    /// Confidence threshold τ ∈ (0, 1].
    pub tau: f64,
    /// Unlabeled loss weight λ ≥ 0.
    pub lambda: f64,
    /// APP-U momentum γ ∈ [0, 1).
    pub gamma: f64,
}

impl Default for SslHyperParams {
    fn default() -> Self {
        Self {
            tau: 0.95,
            lambda: 1.0,
            gamma: 0.9,
        }
    }
}

impl SslHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Momentum-accumulated APP-U of one client.
#[derive(Debug, Clone, PartialEq)]
pub struct AppU {
    mean: ProbabilityVector,
    gamma: f64,
    initialized: bool,
}

impl AppU {
    /// Starts uninitialized at the uniform distribution. `gamma` may be 1
    /// here (frozen accumulator) even though training configs reject it.
    pub fn new(classes: usize, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(Self {
            mean: ProbabilityVector::uniform(classes),
            gamma,
            initialized: false,
        })
    }

    pub fn mean(&self) -> &ProbabilityVector {
        &self.mean
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Adopts `fresh` if nothing has been accumulated yet.
    pub fn seed(&mut self, fresh: &ProbabilityVector) {
        if !self.initialized {
            self.mean = fresh.clone();
            self.initialized = true;
        }
    }

    /// `p̄ ← γ p̄ + (1 − γ) fresh`, or adoption of `fresh` when uninitialized.
    pub fn accumulate(&mut self, fresh: &ProbabilityVector) {
        if !self.initialized {
            self.seed(fresh);
            return;
        }
        let g = self.gamma;
        let mixed: Vec<f64> = self
            .mean
            .as_slice()
            .iter()
            .zip(fresh.as_slice())
            .map(|(old, new)| g * old + (1.0 - g) * new)
            .collect();
        self.mean = ProbabilityVector::new_unchecked(mixed);
    }
}

/// Pure form of [`AppU::accumulate`].
pub fn accumulate_appu(state: &AppU, fresh: &ProbabilityVector) -> AppU {
    let mut next = state.clone();
    next.accumulate(fresh);
    next
}

/// Mean of prediction rows.
pub fn mean_prediction(probs: ArrayView2<f64>) -> Result<ProbabilityVector> {
    if probs.nrows() == 0 {
        return Err(Error::Estimator("APP-U needs at least one unlabeled sample".into()));
    }
    let mean = probs.mean_axis(Axis(0)).expect("nonempty");
    Ok(ProbabilityVector::new_unchecked(mean.to_vec()))
}

/// Softmax predictions on a fresh weak view of the unlabeled pool.
pub fn weak_predictions<R: Rng + ?Sized>(
    model: &ModelParams,
    unlabeled: &UnlabeledSet,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let view = aug.weak(unlabeled.features.view(), rng);
    model.predict_proba(view.view())
}

/// APP-U: mean softmax output over weak views of the unlabeled pool.
pub fn compute_appu<R: Rng + ?Sized>(
    model: &ModelParams,
    unlabeled: &UnlabeledSet,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<ProbabilityVector> {
    if unlabeled.is_empty() {
        return Err(Error::Estimator("APP-U needs at least one unlabeled sample".into()));
    }
    mean_prediction(weak_predictions(model, unlabeled, aug, rng)?.view())
}

fn debias_into(p: &[f64], prior: &[f64], out: &mut [f64]) {
    let mut sum = 0.0;
    for ((o, pk), qk) in out.iter_mut().zip(p).zip(prior) {
        *o = pk / qk.max(PRIOR_EPS);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `p̂_k = (p_k / p̄_k) / Σ_j (p_j / p̄_j)`, with `p̄` floored at 1e-8.
///
/// An exactly uniform prior returns `p` unchanged.
pub fn debias(p: &ProbabilityVector, prior: &ProbabilityVector) -> ProbabilityVector {
    if prior.is_exactly_uniform() {
        return p.clone();
    }
    let mut out = vec![0.0; p.len()];
    debias_into(p.as_slice(), prior.as_slice(), &mut out);
    ProbabilityVector::new_unchecked(out)
}

/// Per unlabeled sample: a one-hot class or nothing (the all-zero row).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabelSet {
    classes: usize,
    labels: Vec<Option<usize>>,
}

impl PseudoLabelSet {
    pub fn new(classes: usize, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.iter().flatten().any(|&k| k >= classes) {
            return Err(Error::config("pseudo-label outside class range"));
        }
        Ok(Self { classes, labels })
    }

    pub fn empty(classes: usize, n: usize) -> Self {
        Self {
            classes,
            labels: vec![None; n],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn confident_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// Entry `i` as a vector in `{0,1}^K`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.classes];
        if let Some(k) = self.labels[i] {
            v[k] = 1.0;
        }
        v
    }
}

/// Thresholded argmax over prediction rows, optionally debiased first.
pub fn assign_pseudo_labels(
    probs: ArrayView2<f64>,
    prior: Option<&ProbabilityVector>,
    tau: f64,
) -> PseudoLabelSet {
    let classes = probs.ncols();
    let prior = prior.filter(|p| !p.is_exactly_uniform());
    let mut scratch = vec![0.0; classes];
    let labels = probs
        .axis_iter(Axis(0))
        .map(|row| {
            let row = row.as_slice().expect("contiguous");
            let p: &[f64] = match prior {
                Some(prior) => {
                    debias_into(row, prior.as_slice(), &mut scratch);
                    &scratch
                }
                None => row,
            };
            let k = crate::nn::argmax(p);
            (p[k] >= tau).then_some(k)
        })
        .collect();
    PseudoLabelSet { classes, labels }
}

/// Debiased pseudo-labeling. Returns the labels and the fresh APP-U used to
/// debias them.
pub fn dpl<R: Rng + ?Sized>(
    model: &ModelParams,
    unlabeled: &UnlabeledSet,
    tau: f64,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<(PseudoLabelSet, ProbabilityVector)> {
    let probs = weak_predictions(model, unlabeled, aug, rng)?;
    let fresh = mean_prediction(probs.view())?;
    let labels = assign_pseudo_labels(probs.view(), Some(&fresh), tau);
    Ok((labels, fresh))
}

/// FixMatch-style thresholded pseudo-labeling on weak views.
pub fn baseline_pseudo_label<R: Rng + ?Sized>(
    model: &ModelParams,
    unlabeled: &UnlabeledSet,
    tau: f64,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<PseudoLabelSet> {
    let probs = weak_predictions(model, unlabeled, aug, rng)?;
    Ok(assign_pseudo_labels(probs.view(), None, tau))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad: ModelParams,
}

/// `L_s`: mean cross-entropy of true labels against predictions on weak views.
pub fn supervised_loss<R: Rng + ?Sized>(
    model: &ModelParams,
    labeled: &LabeledSet,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<LossAndGrad> {
    if labeled.is_empty() {
        return Err(Error::config("supervised loss needs at least one labeled sample"));
    }
    let x = aug.weak(labeled.features.view(), rng);
    let mut y = Array2::zeros((labeled.len(), model.num_classes()));
    for (i, &k) in labeled.labels.iter().enumerate() {
        y[[i, k]] = 1.0;
    }
    let (grad, loss) = backward(model, x.view(), y.view(), &vec![1.0; labeled.len()])?;
    Ok(LossAndGrad { loss, grad })
}

/// `L_u = (1/N_u) Σ 1[confident] · H(ŷ, p(y | A(x)))`.
///
/// Normalized by the full pool size. Only confident samples are strongly
/// augmented and pushed through the network.
pub fn unsupervised_loss<R: Rng + ?Sized>(
    model: &ModelParams,
    unlabeled: &UnlabeledSet,
    pseudo: &PseudoLabelSet,
    aug: &Augmentation,
    rng: &mut R,
) -> Result<LossAndGrad> {
    if pseudo.len() != unlabeled.len() {
        return Err(Error::config("pseudo-labels are not aligned with the unlabeled pool"));
    }
    let rows: Vec<usize> = (0..pseudo.len()).filter(|&i| pseudo.labels[i].is_some()).collect();
    if rows.is_empty() {
        return Ok(LossAndGrad {
            loss: 0.0,
            grad: model.zeros_like(),
        });
    }
    let x = aug.strong(unlabeled.features.select(Axis(0), &rows).view(), rng);
    let mut y = Array2::zeros((rows.len(), model.num_classes()));
    for (r, &i) in rows.iter().enumerate() {
        y[[r, pseudo.labels[i].expect("confident")]] = 1.0;
    }
    let (grad, loss) = backward_weighted(model, x.view(), y.view(), &vec![1.0; rows.len()], unlabeled.len() as f64)?;
    Ok(LossAndGrad { loss, grad })
}

/// `L = L_s + λ L_u`, with the matching gradient.
pub fn total_loss(supervised: &LossAndGrad, unsupervised: &LossAndGrad, lambda: f64) -> LossAndGrad {
    let mut grad = supervised.grad.clone();
    grad.scaled_add(lambda, &unsupervised.grad);
    LossAndGrad {
        loss: supervised.loss + lambda * unsupervised.loss,
        grad,
    }
}

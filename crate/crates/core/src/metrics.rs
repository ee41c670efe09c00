//! Evaluation: class-wise accuracy, JS divergence, pseudo-label quality and
//! per-round CSV logs.

use std::fs;
use std::path::Path;

use crate::data::{Corpus, HiddenLabels, LabeledSet};
use crate::error::{Error, Result};
use crate::nn::{ModelParams, ProbabilityVector};
use crate::ssl::PseudoLabelSet;

fn kl_term(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / m).ln()
    }
}

/// Jensen–Shannon divergence in nats, in `[0, ln 2]`.
pub fn js_divergence(p: &ProbabilityVector, q: &ProbabilityVector) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let js: f64 = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            0.5 * kl_term(a, m) + 0.5 * kl_term(b, m)
        })
        .sum();
    js.clamp(0.0, std::f64::consts::LN_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClasswiseAccuracy {
    pub per_class: Vec<f64>,
    /// Unweighted mean of `per_class`.
    pub balanced: f64,
}

impl ClasswiseAccuracy {
    /// Per-class accuracies normalized to sum 1; all-zero maps to uniform.
    pub fn bias_distribution(&self) -> ProbabilityVector {
        ProbabilityVector::from_weights(&self.per_class).expect("accuracies lie in [0, 1]")
    }
}

/// Per-class accuracy from hard predictions. Every class must occur.
pub fn classwise_from_predictions(predictions: &[usize], labels: &[usize], classes: usize) -> Result<ClasswiseAccuracy> {
    if predictions.len() != labels.len() {
        return Err(Error::Metric("predictions and labels differ in length".into()));
    }
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&pred, &y) in predictions.iter().zip(labels) {
        if y >= classes {
            return Err(Error::Metric(format!("label {y} outside [0, {classes})")));
        }
        totals[y] += 1;
        if pred == y {
            hits[y] += 1;
        }
    }
    if let Some(k) = totals.iter().position(|&t| t == 0) {
        return Err(Error::Metric(format!("test set has no samples of class {k}")));
    }
    let per_class: Vec<f64> = hits.iter().zip(&totals).map(|(&h, &t)| h as f64 / t as f64).collect();
    let balanced = per_class.iter().sum::<f64>() / classes as f64;
    Ok(ClasswiseAccuracy { per_class, balanced })
}

pub fn classwise_accuracy(model: &ModelParams, test: &Corpus) -> Result<ClasswiseAccuracy> {
    let predictions = model.predict(test.features.view())?;
    classwise_from_predictions(&predictions, &test.labels, test.num_classes)
}

/// Normalized class histogram of a labeled set.
pub fn label_distribution(labeled: &LabeledSet, classes: usize) -> ProbabilityVector {
    let counts: Vec<f64> = labeled.class_counts(classes).into_iter().map(|c| c as f64).collect();
    ProbabilityVector::from_weights(&counts).expect("counts are nonnegative")
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PseudoCounts {
    pub confident: usize,
    pub correct: usize,
    pub total: usize,
}

impl PseudoCounts {
    /// Correct among confident; `None` when nothing was confident.
    pub fn accuracy(&self) -> Option<f64> {
        (self.confident > 0).then(|| self.correct as f64 / self.confident as f64)
    }

    /// Confident fraction of the pool.
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.confident as f64 / self.total as f64
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            confident: self.confident + other.confident,
            correct: self.correct + other.correct,
            total: self.total + other.total,
        }
    }
}

/// Pseudo-label accuracy and coverage against the hidden truth.
pub fn pseudo_metrics(pseudo: &PseudoLabelSet, truth: &HiddenLabels) -> Result<PseudoCounts> {
    let truth = truth.reveal();
    if truth.len() != pseudo.len() {
        return Err(Error::Metric("pseudo-labels and hidden labels are not aligned".into()));
    }
    let mut counts = PseudoCounts {
        total: truth.len(),
        ..Default::default()
    };
    for (label, &y) in pseudo.labels().iter().zip(truth) {
        if let Some(k) = label {
            counts.confident += 1;
            if *k == y {
                counts.correct += 1;
            }
        }
    }
    Ok(counts)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub balanced_test_accuracy: f64,
    pub classwise_accuracy: Vec<f64>,
    /// Mean over the round's clients of JS(APP-U, normalized local class-wise accuracy).
    pub js_appu_vs_truth: f64,
    /// Mean over the round's clients of JS(labeled distribution, same target).
    pub js_labeldist_vs_truth: f64,
    pub pseudo_accuracy: Option<f64>,
    pub pseudo_ratio: f64,
    pub l_aggr_initial: Option<f64>,
    pub l_aggr_final: Option<f64>,
}

/// Six significant digits, scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.5e}")
}

/// The value a float takes after a trip through [`format_float`].
pub fn round_sig6(x: f64) -> f64 {
    format_float(x).parse().expect("formatted float parses")
}

pub fn csv_header(classes: usize) -> String {
    let mut cols = vec!["round".to_string(), "balanced_test_accuracy".to_string()];
    cols.extend((0..classes).map(|k| format!("classwise_accuracy_{k}")));
    cols.extend(
        [
            "js_appu_vs_truth",
            "js_labeldist_vs_truth",
            "pseudo_accuracy",
            "pseudo_ratio",
            "l_aggr_initial",
            "l_aggr_final",
        ]
        .map(String::from),
    );
    cols.join(",")
}

fn csv_row(m: &RoundMetrics) -> String {
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    let mut cols = vec![m.round.to_string(), format_float(m.balanced_test_accuracy)];
    cols.extend(m.classwise_accuracy.iter().map(|&v| format_float(v)));
    cols.push(format_float(m.js_appu_vs_truth));
    cols.push(format_float(m.js_labeldist_vs_truth));
    cols.push(opt(m.pseudo_accuracy));
    cols.push(format_float(m.pseudo_ratio));
    cols.push(opt(m.l_aggr_initial));
    cols.push(opt(m.l_aggr_final));
    cols.join(",")
}

/// Renders a log as CSV text: header plus one row per round.
pub fn render_csv(log: &[RoundMetrics], classes: usize) -> String {
    let mut out = csv_header(classes);
    out.push('\n');
    for m in log {
        out.push_str(&csv_row(m));
        out.push('\n');
    }
    out
}

pub fn emit_csv(log: &[RoundMetrics], classes: usize, path: &Path) -> Result<()> {
    fs::write(path, render_csv(log, classes)).map_err(|e| Error::io(path, e))
}

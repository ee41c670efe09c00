use std::ops::Index;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Floor applied to predicted probabilities before taking a log.
pub const LOG_EPS: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-9;

/// Unnormalized class scores for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A point on the probability simplex over `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Validates nonnegativity and unit sum (within 1e-9).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::config("probability vector must have at least one entry"));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(format!("probability vector has invalid entries: {p:?}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::config(format!("probability vector sums to {sum}, not 1")));
        }
        Ok(Self(p))
    }

    /// Caller guarantees the simplex invariant.
    pub(crate) fn new_unchecked(p: Vec<f64>) -> Self {
        debug_assert!(p.iter().all(|v| *v >= 0.0));
        debug_assert!((p.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
        Self(p)
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, class: usize) -> Self {
        let mut p = vec![0.0; k];
        p[class] = 1.0;
        Self(p)
    }

    /// Normalizes nonnegative weights; an all-zero vector maps to uniform.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config(format!("weights must be finite and nonnegative: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if sum == 0.0 {
            return Ok(Self::uniform(weights.len()));
        }
        Ok(Self(weights.iter().map(|w| w / sum).collect()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when all entries are bitwise equal, i.e. the exactly uniform prior.
    pub fn is_exactly_uniform(&self) -> bool {
        self.0.iter().all(|v| *v == self.0[0])
    }
}

impl Index<usize> for ProbabilityVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Max-shifted softmax.
pub fn softmax(z: &Logits) -> ProbabilityVector {
    let mut p = z.0.clone();
    softmax_in_place(&mut p);
    ProbabilityVector(p)
}

/// Row-wise softmax of a batch of logits.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        softmax_in_place(row.as_slice_mut().expect("owned rows are contiguous"));
    }
    out
}

/// H(y, p) = −Σ y_k ln max(p_k, 1e-12).
pub fn cross_entropy(target: &[f64], pred: &[f64]) -> f64 {
    debug_assert_eq!(target.len(), pred.len());
    let h: f64 = target
        .iter()
        .zip(pred)
        .filter(|(y, _)| **y != 0.0)
        .map(|(y, p)| -y * p.max(LOG_EPS).ln())
        .sum();
    // -0.0 for perfect predictions
    h.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_of_zero_is_uniform() {
        let p = softmax(&Logits(vec![0.0; 4]));
        assert!(p.as_slice().iter().all(|v| (*v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_inverts_log() {
        let p = softmax(&Logits(vec![1f64.ln(), 2f64.ln(), 3f64.ln()]));
        for (got, want) in p.as_slice().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = softmax(&Logits(vec![1000.0, 1000.0, -1000.0]));
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn cross_entropy_closed_forms() {
        assert_eq!(cross_entropy(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]), 0.0);
        let uniform = vec![0.1; 10];
        let mut y = vec![0.0; 10];
        y[0] = 1.0;
        assert!((cross_entropy(&y, &uniform) - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_total_on_zero_predictions() {
        let h = cross_entropy(&[1.0, 0.0], &[0.0, 1.0]);
        assert!((h + LOG_EPS.ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(ProbabilityVector::uniform(3).argmax(), 0);
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
        assert_eq!(ProbabilityVector::from_weights(&[0.0, 0.0]).unwrap(), ProbabilityVector::uniform(2));
    }

    proptest! {
        #[test]
        fn softmax_lands_on_simplex(z in prop::collection::vec(-50.0f64..50.0, 2..12)) {
            let p = softmax(&Logits(z));
            prop_assert!(p.as_slice().iter().all(|v| *v >= 0.0));
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn softmax_is_shift_invariant(z in prop::collection::vec(-20.0f64..20.0, 2..12), c in -100.0f64..100.0) {
            let a = softmax(&Logits(z.clone()));
            let b = softmax(&Logits(z.iter().map(|v| v + c).collect()));
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

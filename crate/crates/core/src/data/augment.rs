use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Weak view: Gaussian jitter. Strong view: heavier jitter followed by
/// independent per-coordinate zero masking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub weak_sigma: f64,
    pub strong_sigma: f64,
    pub mask_prob: f64,
}

impl Augmentation {
    /// Defaults scaled to the data noise: σ_w = 0.1·s, σ_s = 0.5·s, ρ = 0.2.
    pub fn for_noise_scale(noise_scale: f64) -> Self {
        Self {
            weak_sigma: 0.1 * noise_scale,
            strong_sigma: 0.5 * noise_scale,
            mask_prob: 0.2,
        }
    }

    pub fn identity() -> Self {
        Self {
            weak_sigma: 0.0,
            strong_sigma: 0.0,
            mask_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weak_sigma >= 0.0 && self.weak_sigma.is_finite())
            || !(self.strong_sigma >= 0.0 && self.strong_sigma.is_finite())
        {
            return Err(Error::config("augmentation noise levels must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(Error::config(format!("mask probability must lie in [0, 1], got {}", self.mask_prob)));
        }
        Ok(())
    }

    pub fn weak<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, rng: &mut R) -> Array2<f64> {
        let mut out = x.to_owned();
        if self.weak_sigma > 0.0 {
            for v in out.iter_mut() {
                *v += self.weak_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        out
    }

    pub fn strong<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, rng: &mut R) -> Array2<f64> {
        let mut out = x.to_owned();
        for v in out.iter_mut() {
            let eps: f64 = rng.sample(StandardNormal);
            let keep = rng.random::<f64>() >= self.mask_prob;
            *v = if keep { *v + self.strong_sigma * eps } else { 0.0 };
        }
        out
    }
}

/// `x + ε`, `ε ~ N(0, σ²I)`.
pub fn weak_augment<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `mask ⊙ (x + ε)` with each coordinate zeroed with probability `mask_prob`.
pub fn strong_augment<R: Rng + ?Sized>(x: &[f64], sigma: f64, mask_prob: f64, rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let eps: f64 = rng.sample(StandardNormal);
            if rng.random::<f64>() >= mask_prob {
                v + sigma * eps
            } else {
                0.0
            }
        })
        .collect()
}

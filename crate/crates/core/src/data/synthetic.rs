use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};
#[cfg(test)]
use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Sample;
use crate::error::{Error, Result};
use crate::rng::{run_stream, Purpose};

/// How class means are laid out. Both put every mean at distance
/// `class_separation` from the origin, and both give `(±c, 0, …)` for two
/// classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrangement {
    /// Evenly spaced on a circle in the first two coordinates.
    Circle,
    /// Vertices of a centred regular simplex in the first `K − 1`
    /// coordinates (Helmert basis). Needs `K − 1 ≤ d`.
    Simplex,
}

impl Arrangement {
    pub fn name(self) -> &'static str {
        match self {
            Arrangement::Circle => "circle",
            Arrangement::Simplex => "simplex",
        }
    }
}

impl std::str::FromStr for Arrangement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(Arrangement::Circle),
            "simplex" => Ok(Arrangement::Simplex),
            _ => Err(Error::config(format!("unknown arrangement `{s}`"))),
        }
    }
}

/// Gaussian-blob task parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    /// Training samples per class.
    pub class_counts: Vec<usize>,
    pub test_per_class: usize,
    pub arrangement: Arrangement,
    /// Distance of every class mean from the origin.
    pub class_separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

/// Labeled samples, one per row of `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.features
            .rows()
            .into_iter()
            .zip(&self.labels)
            .map(|(x, &y)| Sample {
                x: x.to_vec(),
                label: Some(y),
            })
            .collect()
    }

    /// Builds a corpus from fully labeled samples.
    pub fn from_samples(samples: &[Sample], num_classes: usize) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.x.len());
        let mut features = Array2::zeros((samples.len(), dim));
        let mut labels = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(Error::config(format!("sample {i} has dimension {}, expected {dim}", s.x.len())));
            }
            let y = s
                .label
                .ok_or_else(|| Error::config(format!("sample {i} is unlabeled")))?;
            if y >= num_classes {
                return Err(Error::config(format!("sample {i} has label {y} outside [0, {num_classes})")));
            }
            features.row_mut(i).assign(&ArrayView1::from(&s.x));
            labels.push(y);
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: Corpus,
    /// Class-balanced held-out set from the same distribution.
    pub test: Corpus,
    pub means: Array2<f64>,
}

/// Isotropic blobs with covariance `noise_scale²·I` around means laid out
/// by [`Arrangement`]. Train and test sets are class-ordered.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.classes < 2 {
        return Err(Error::config("need at least 2 classes"));
    }
    if spec.dim < 2 {
        return Err(Error::config("need at least 2 feature dimensions"));
    }
    if !(spec.noise_scale > 0.0 && spec.noise_scale.is_finite()) {
        return Err(Error::config(format!("noise_scale must be positive, got {}", spec.noise_scale)));
    }
    if !(spec.class_separation >= 0.0 && spec.class_separation.is_finite()) {
        return Err(Error::config("class_separation must be finite and nonnegative"));
    }
    if spec.class_counts.len() != spec.classes {
        return Err(Error::config(format!(
            "{} class counts for {} classes",
            spec.class_counts.len(),
            spec.classes
        )));
    }
    if spec.class_counts.contains(&0) || spec.test_per_class == 0 {
        return Err(Error::config("per-class sample counts must be positive"));
    }

    let means = class_means(spec.arrangement, spec.classes, spec.dim, spec.class_separation)?;

    let blob = |counts: &[usize], purpose: Purpose| {
        let mut rng = run_stream(spec.seed, purpose);
        let n = counts.iter().sum();
        let mut features = Array2::zeros((n, spec.dim));
        let mut labels = Vec::with_capacity(n);
        for (k, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let mut row = features.row_mut(labels.len());
                for (j, v) in row.iter_mut().enumerate() {
                    let eps: f64 = rng.sample(StandardNormal);
                    *v = means[[k, j]] + spec.noise_scale * eps;
                }
                labels.push(k);
            }
        }
        Corpus {
            features,
            labels,
            num_classes: spec.classes,
        }
    };

    Ok(SyntheticData {
        train: blob(&spec.class_counts, Purpose::Corpus),
        test: blob(&vec![spec.test_per_class; spec.classes], Purpose::TestSet),
        means: means.clone(),
    })
}

/// Splits `total` samples over `classes` with an exponential profile: class
/// `k` gets weight `ratio^(−k/(K−1))`, so the head has `ratio` times the tail.
/// `ratio = 1` is balanced. Largest-remainder rounding keeps the sum exact.
pub fn long_tailed_counts(total: usize, classes: usize, ratio: f64) -> Result<Vec<usize>> {
    if classes < 2 {
        return Err(Error::config("need at least 2 classes"));
    }
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(Error::config(format!("imbalance ratio must be at least 1, got {ratio}")));
    }
    let weights: Vec<f64> = (0..classes)
        .map(|k| ratio.powf(-(k as f64) / (classes - 1) as f64))
        .collect();
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    let missing = total - counts.iter().sum::<usize>();
    for &k in order.iter().take(missing) {
        counts[k] += 1;
    }
    Ok(counts)
}

/// `K × d` matrix of class means, each at distance `radius` from 0.
pub fn class_means(arrangement: Arrangement, classes: usize, dim: usize, radius: f64) -> Result<Array2<f64>> {
    let mut means = Array2::zeros((classes, dim));
    match arrangement {
        Arrangement::Circle => {
            for k in 0..classes {
                let theta = 2.0 * PI * k as f64 / classes as f64;
                means[[k, 0]] = radius * theta.cos();
                means[[k, 1]] = radius * theta.sin();
            }
        }
        Arrangement::Simplex => {
            if classes - 1 > dim {
                return Err(Error::config(format!("a {classes}-class simplex needs at least {} dimensions", classes - 1)));
            }
            // e_k − 1/K projected on h_j = (1, …, 1, −j, 0, …)/sqrt(j(j+1)),
            // then scaled from circumradius sqrt((K−1)/K) to `radius`.
            let kf = classes as f64;
            let scale = radius / ((kf - 1.0) / kf).sqrt();
            for j in 1..classes {
                let norm = ((j * (j + 1)) as f64).sqrt();
                for k in 0..classes {
                    let h = match k.cmp(&j) {
                        std::cmp::Ordering::Less => 1.0,
                        std::cmp::Ordering::Equal => -(j as f64),
                        std::cmp::Ordering::Greater => 0.0,
                    };
                    means[[k, j - 1]] = scale * h / norm;
                }
            }
        }
    }
    Ok(means)
}

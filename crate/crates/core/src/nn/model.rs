use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::prob::{cross_entropy, softmax_rows, Logits};
use crate::error::{Error, Result};

/// One affine layer. `weight` is `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }
}

/// Weights and biases of an MLP, also used as the shape of its gradient
/// and of the momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<Dense>,
}

impl ModelParams {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("model needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.fan_in() == 0 || layer.fan_out() == 0 {
                return Err(Error::config(format!("layer {i} has a zero dimension")));
            }
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::config(format!("layer {i} bias length does not match fan-out")));
            }
            if i > 0 && layers[i - 1].fan_out() != layer.fan_in() {
                return Err(Error::config(format!("layer {i} fan-in does not match previous fan-out")));
            }
        }
        Ok(Self { layers })
    }

    fn layer_dims(input_dim: usize, hidden: &[usize], classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(classes);
        dims
    }

    pub fn zeros(input_dim: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let dims = Self::layer_dims(input_dim, hidden, classes);
        Self::new(dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], classes: usize, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(input_dim, hidden, classes)?;
        for layer in &mut model.layers {
            let s = (6.0 / (layer.fan_in() + layer.fan_out()) as f64).sqrt();
            layer.weight.mapv_inplace(|_| rng.random_range(-s..s));
        }
        Ok(model)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(Dense::fan_out).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim())
    }

    /// All parameters in layer order, weights (row-major) before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// `self += alpha * other`.
    pub fn scaled_add(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(alpha, &b.weight);
            a.bias.scaled_add(alpha, &b.bias);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self.values_mut() {
            *v *= alpha;
        }
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::config(format!(
                "input has dimension {dim}, model expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Logits for a single feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Logits> {
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("row vector shape");
        let z = self.forward_batch(batch)?;
        Ok(Logits(z.into_raw_vec_and_offset().0))
    }

    /// Logits for a batch, one sample per row.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut a = affine(x, &self.layers[0]);
        for layer in &self.layers[1..] {
            a.mapv_inplace(relu);
            a = affine(a.view(), layer);
        }
        Ok(a)
    }

    /// Softmax probabilities for a batch.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let p = softmax_rows(self.forward_batch(x)?.view());
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite prediction (logits overflowed)".into()));
        }
        Ok(p)
    }

    /// Hard predictions for a batch.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let z = self.forward_batch(x)?;
        Ok(z.axis_iter(Axis(0))
            .map(|row| super::prob::argmax(row.as_slice().expect("contiguous")))
            .collect())
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn affine(x: ArrayView2<f64>, layer: &Dense) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

/// Gradient of the mean cross-entropy `(1/N) Σ H(y_n, p_n)` over a batch.
pub fn backward(
    params: &ModelParams,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    sample_weights: &[f64],
) -> Result<(ModelParams, f64)> {
    let n = x.nrows() as f64;
    backward_weighted(params, x, targets, sample_weights, n)
}

/// Gradient of `(1/denominator) Σ w_n H(y_n, p_n)`.
///
/// The denominator is explicit so masked samples can be dropped from the
/// batch while still normalizing by the full pool size. An empty batch
/// yields a zero gradient and zero loss.
pub fn backward_weighted(
    params: &ModelParams,
    x: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    sample_weights: &[f64],
    denominator: f64,
) -> Result<(ModelParams, f64)> {
    let n = x.nrows();
    if targets.nrows() != n || sample_weights.len() != n {
        return Err(Error::config("batch features, targets and weights must have equal length"));
    }
    if targets.ncols() != params.num_classes() {
        return Err(Error::config("target width does not match class count"));
    }
    if sample_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::config("sample weights must be finite and nonnegative"));
    }
    if n == 0 || denominator <= 0.0 {
        return Ok((params.zeros_like(), 0.0));
    }
    params.check_input(x.ncols())?;

    // inputs[l] feeds layer l (post-ReLU for l > 0)
    let layers = params.layers();
    let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    inputs.push(x.to_owned());
    for layer in &layers[..layers.len() - 1] {
        let mut h = affine(inputs.last().expect("nonempty").view(), layer);
        h.mapv_inplace(relu);
        inputs.push(h);
    }
    let logits = affine(inputs.last().expect("nonempty").view(), &layers[layers.len() - 1]);
    let probs = softmax_rows(logits.view());

    let mut loss = 0.0;
    let mut delta = Array2::<f64>::zeros(probs.dim());
    for (i, ((p, y), mut d)) in probs
        .axis_iter(Axis(0))
        .zip(targets.axis_iter(Axis(0)))
        .zip(delta.axis_iter_mut(Axis(0)))
        .enumerate()
    {
        let w = sample_weights[i];
        if w == 0.0 {
            continue;
        }
        let p = p.as_slice().expect("contiguous");
        let y: Vec<f64> = y.iter().copied().collect();
        loss += w * cross_entropy(&y, p);
        let mass: f64 = y.iter().sum();
        let scale = w / denominator;
        Zip::from(&mut d)
            .and(p)
            .and(&y[..])
            .for_each(|d, &pk, &yk| *d = (mass * pk - yk) * scale);
    }
    loss /= denominator;

    let mut grad = params.zeros_like();
    for l in (0..layers.len()).rev() {
        let g = &mut grad.layers_mut()[l];
        g.weight = delta.t().dot(&inputs[l]);
        g.bias = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut prev = delta.dot(&layers[l].weight);
            Zip::from(&mut prev)
                .and(&inputs[l])
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            delta = prev;
        }
    }
    Ok((grad, loss))
}

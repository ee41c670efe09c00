use crate::error::{Error, Result};
use crate::nn::{ModelParams, ProbabilityVector};

/// Square-root smoothing that keeps the balance loss differentiable at its
/// optimum.
const SQRT_EPS: f64 = 1e-12;

/// Per-client aggregation weights on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights(Vec<f64>);

impl AggregationWeights {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::Protocol(format!("invalid aggregation weights {beta:?}")));
        }
        let sum: f64 = beta.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Protocol(format!("aggregation weights sum to {sum}")));
        }
        Ok(Self(beta))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Σ_m β_m w_m`, accumulated in client order.
pub fn fedavg_aggregate(models: &[ModelParams], weights: &AggregationWeights) -> Result<ModelParams> {
    if models.is_empty() || models.len() != weights.len() {
        return Err(Error::Protocol(format!(
            "{} models but {} aggregation weights",
            models.len(),
            weights.len()
        )));
    }
    if let Some(i) = models.iter().position(|m| !m.same_shape(&models[0])) {
        return Err(Error::Protocol(format!("model {i} has a different shape")));
    }
    let mut out = models[0].zeros_like();
    for (m, &b) in models.iter().zip(weights.as_slice()) {
        out.scaled_add(b, m);
    }
    Ok(out)
}

fn residual(beta: &[f64], appus: &[ProbabilityVector]) -> Vec<f64> {
    let k = appus[0].len();
    let target = 1.0 / k as f64;
    // p̄_aggr first, then the offset: subtracting 1/K up front leaves a
    // rounding residue at exactly balanced mixtures, and the norm's gradient
    // blows that residue up to O(1).
    let mut r = vec![0.0; k];
    for (b, p) in beta.iter().zip(appus) {
        for (rk, pk) in r.iter_mut().zip(p.as_slice()) {
            *rk += b * pk;
        }
    }
    for rk in &mut r {
        *rk -= target;
    }
    r
}

/// `L_aggr(β) = sqrt(Σ_k (Σ_m β_m p̄_{m,k} − 1/K)² + ε)`.
pub fn aggregation_loss(beta: &[f64], appus: &[ProbabilityVector]) -> f64 {
    (residual(beta, appus).iter().map(|r| r * r).sum::<f64>() + SQRT_EPS).sqrt()
}

/// `∂L_aggr/∂β_m = Σ_k r_k p̄_{m,k} / L_aggr`, with β treated as free
/// coordinates.
pub fn aggregation_loss_grad(beta: &[f64], appus: &[ProbabilityVector]) -> Vec<f64> {
    let r = residual(beta, appus);
    let loss = (r.iter().map(|v| v * v).sum::<f64>() + SQRT_EPS).sqrt();
    appus
        .iter()
        .map(|p| r.iter().zip(p.as_slice()).map(|(rk, pk)| rk * pk).sum::<f64>() / loss)
        .collect()
}

fn softmax(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Aggregation weights from `epochs` rounds of gradient step + softmax
/// reprojection, starting from uniform. Also returns the loss at the
/// uniform start and at the final weights.
pub fn dma_weights(appus: &[ProbabilityVector], epochs: usize, lr: f64) -> Result<(AggregationWeights, f64, f64)> {
    if appus.is_empty() {
        return Err(Error::Protocol("debiased aggregation needs at least one client".into()));
    }
    let k = appus[0].len();
    if appus.iter().any(|p| p.len() != k) {
        return Err(Error::Protocol("APP-U vectors differ in class count".into()));
    }
    let m = appus.len();
    let mut beta = vec![1.0 / m as f64; m];
    let initial = aggregation_loss(&beta, appus);
    if m == 1 {
        return Ok((AggregationWeights(vec![1.0]), initial, initial));
    }
    for _ in 0..epochs {
        let grad = aggregation_loss_grad(&beta, appus);
        for (b, g) in beta.iter_mut().zip(&grad) {
            *b -= lr * g;
        }
        softmax(&mut beta);
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("aggregation weights became non-finite".into()));
    }
    let last = aggregation_loss(&beta, appus);
    Ok((AggregationWeights(beta), initial, last))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmaOutcome {
    pub model: ModelParams,
    pub weights: AggregationWeights,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Debiased model aggregation: weights that push the weighted APP-U toward
/// uniform, then a weighted average of the client models.
pub fn dma(models: &[ModelParams], appus: &[ProbabilityVector], epochs: usize, lr: f64) -> Result<DmaOutcome> {
    if models.len() != appus.len() {
        return Err(Error::Protocol("one APP-U per client model is required".into()));
    }
    let (weights, initial_loss, final_loss) = dma_weights(appus, epochs, lr)?;
    let model = if models.len() == 1 {
        models[0].clone()
    } else {
        fedavg_aggregate(models, &weights)?
    };
    Ok(DmaOutcome {
        model,
        weights,
        initial_loss,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    fn models(n: usize) -> Vec<ModelParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        (0..n).map(|_| ModelParams::init(3, &[4], 2, &mut rng).unwrap()).collect()
    }

    #[test]
    fn one_hot_weights_select_a_model() {
        let ms = models(3);
        let w = AggregationWeights::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(fedavg_aggregate(&ms, &w).unwrap(), ms[1]);
    }

    #[test]
    fn identical_models_average_to_themselves() {
        let m = models(1).remove(0);
        let w = AggregationWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let out = fedavg_aggregate(&[m.clone(), m.clone(), m.clone()], &w).unwrap();
        for (a, b) in out.values().zip(m.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_protocol_error() {
        let a = ModelParams::zeros(3, &[4], 2).unwrap();
        let b = ModelParams::zeros(3, &[5], 2).unwrap();
        let w = AggregationWeights::uniform(2);
        assert!(matches!(fedavg_aggregate(&[a, b], &w), Err(Error::Protocol(_))));
        assert!(fedavg_aggregate(&models(2), &AggregationWeights::uniform(3)).is_err());
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(AggregationWeights::new(vec![0.5, 0.6]).is_err());
        assert!(AggregationWeights::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn identical_appu_keeps_uniform_weights() {
        let appus = vec![pv(&[0.7, 0.2, 0.1]); 4];
        let (w, _, _) = dma_weights(&appus, 100, 1.0).unwrap();
        assert!(w.as_slice().iter().all(|b| (b - 0.25).abs() < 1e-9));
        let ms = models(4);
        let out = dma(&ms, &appus, 100, 1.0).unwrap();
        let mean = fedavg_aggregate(&ms, &AggregationWeights::uniform(4)).unwrap();
        for (a, b) in out.model.values().zip(mean.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_client_gets_full_weight() {
        let ms = models(1);
        let out = dma(&ms, &[pv(&[0.9, 0.1])], 100, 1.0).unwrap();
        assert_eq!(out.weights.as_slice(), &[1.0]);
        assert_eq!(out.model, ms[0]);
    }

    #[test]
    fn symmetric_pair_reaches_balance() {
        let appus = [pv(&[0.9, 0.1]), pv(&[0.1, 0.9])];
        let (w, _, last) = dma_weights(&appus, 100, 1.0).unwrap();
        assert!(w.as_slice().iter().all(|b| (b - 0.5).abs() < 1e-3), "{w:?} {last}");
        assert!(last < 1e-3);
    }

    #[test]
    fn skewed_pair_descends() {
        let appus = [pv(&[0.7, 0.3]), pv(&[0.5, 0.5])];
        let (w, first, last) = dma_weights(&appus, 100, 1.0).unwrap();
        assert!(last <= first);
        assert!(w.as_slice()[1] > w.as_slice()[0]);
    }
}

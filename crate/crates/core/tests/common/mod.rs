#![allow(dead_code)]

use feddb::cli::ExperimentConfig;
use feddb::data::{generate_synthetic, partition, Augmentation};
use feddb::fed::{aggregation_loss, aggregation_loss_grad};
use feddb::nn::{backward, cross_entropy, softmax_rows, sgd_step, ModelParams, OptimizerState, ProbabilityVector};
use feddb::rng::{client_stream, run_stream, Purpose};
use feddb::ssl::{
    assign_pseudo_labels, compute_appu, mean_prediction, supervised_loss, total_loss, unsupervised_loss,
    weak_predictions, AppU,
};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

pub fn random_simplex(k: usize, rng: &mut impl Rng) -> ProbabilityVector {
    let w: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    ProbabilityVector::from_weights(&w).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Mean cross-entropy evaluated through the forward pass only.
pub fn forward_loss(model: &ModelParams, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let p = softmax_rows(model.forward_batch(x).unwrap().view());
    let n = x.nrows() as f64;
    p.rows()
        .into_iter()
        .zip(y.rows())
        .map(|(p, y)| cross_entropy(y.as_slice().unwrap(), p.as_slice().unwrap()))
        .sum::<f64>()
        / n
}

/// Worst relative error between the analytic gradient and central
/// differences over every parameter of a random net.
pub fn model_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (d, h, k, n) = (3 + (seed % 3) as usize, 4 + (seed % 4) as usize, 2 + (seed % 3) as usize, 6);
    let model = ModelParams::init(d, &[h], k, &mut r).unwrap();
    let x = gaussian(n, d, &mut r);
    let mut y = Array2::zeros((n, k));
    for i in 0..n {
        y[[i, r.random_range(0..k)]] = 1.0;
    }
    let (grad, _) = backward(&model, x.view(), y.view(), &vec![1.0; n]).unwrap();
    let analytic: Vec<f64> = grad.values().collect();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = model.clone();
        *plus.values_mut().nth(i).unwrap() += FD_STEP;
        let mut minus = model.clone();
        *minus.values_mut().nth(i).unwrap() -= FD_STEP;
        let fd = (forward_loss(&plus, x.view(), y.view()) - forward_loss(&minus, x.view(), y.view())) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(a, fd));
    }
    worst
}

/// Same check for `∂L_aggr/∂β`, at a random interior β.
pub fn dma_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let m = r.random_range(2..=6);
    let k = r.random_range(2..=6);
    let appus: Vec<ProbabilityVector> = (0..m).map(|_| random_simplex(k, &mut r)).collect();
    let beta = random_simplex(m, &mut r).into_inner();
    let analytic = aggregation_loss_grad(&beta, &appus);
    let mut worst = 0.0f64;
    for i in 0..m {
        let mut plus = beta.clone();
        plus[i] += FD_STEP;
        let mut minus = beta.clone();
        minus[i] -= FD_STEP;
        let fd = (aggregation_loss(&plus, &appus) - aggregation_loss(&minus, &appus)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[i], fd));
    }
    worst
}

pub fn tiny_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.clients = 3;
    c.rounds = 3;
    c.local_epochs = 2;
    c.e_aggr = 20;
    c.labeled_total = 30;
    c.unlabeled_total = 270;
    c.test_per_class = 20;
    c.dim = 6;
    c.hidden = vec![8];
    c.class_separation = 3.0;
    c
}

/// Single-client FedDB written out as one plain training loop, sharing only
/// primitives with the federated code path.
pub fn monolithic_feddb(config: &ExperimentConfig, run_seed: u64) -> ModelParams {
    assert_eq!(config.clients, 1);
    let data = generate_synthetic(&config.synthetic_spec(run_seed).unwrap()).unwrap();
    let client = partition(&data.train, &config.partition_spec(run_seed)).unwrap().remove(0);
    let aug: Augmentation = config.augmentation();
    let mut w = ModelParams::init(config.dim, &config.hidden, config.classes, &mut run_stream(run_seed, Purpose::ModelInit)).unwrap();
    let mut appu = AppU::new(config.classes, config.gamma).unwrap();
    for round in 1..=config.rounds {
        let stream = |p| client_stream(run_seed, 0, round, p);
        let probs = weak_predictions(&w, &client.unlabeled, &aug, &mut stream(Purpose::PseudoLabel)).unwrap();
        let fresh = mean_prediction(probs.view()).unwrap();
        appu.seed(&fresh);
        let labels = assign_pseudo_labels(probs.view(), Some(&fresh), config.tau);
        let mut opt = OptimizerState::new(&w, config.lr, config.momentum).unwrap();
        let (mut a, mut wk, mut st) = (stream(Purpose::AppU), stream(Purpose::WeakLabeled), stream(Purpose::StrongUnlabeled));
        for _ in 0..config.local_epochs {
            let p = compute_appu(&w, &client.unlabeled, &aug, &mut a).unwrap();
            let ls = supervised_loss(&w, &client.labeled, &aug, &mut wk).unwrap();
            let lu = unsupervised_loss(&w, &client.unlabeled, &labels, &aug, &mut st).unwrap();
            let l = total_loss(&ls, &lu, config.lambda);
            sgd_step(&mut w, &l.grad, &mut opt).unwrap();
            appu.accumulate(&p);
        }
    }
    w
}

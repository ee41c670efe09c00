mod common;

use common::*;
use feddb::data::{Augmentation, LabeledSet, UnlabeledSet};
use feddb::nn::{cross_entropy, softmax_rows, ModelParams, ProbabilityVector};
use feddb::ssl::{
    accumulate_appu, assign_pseudo_labels, baseline_pseudo_label, compute_appu, debias, dpl, supervised_loss,
    total_loss, unsupervised_loss, AppU, PseudoLabelSet,
};
use ndarray::{arr2, Array2};
use proptest::prelude::*;
use rand::Rng;

fn pv(v: &[f64]) -> ProbabilityVector {
    ProbabilityVector::new(v.to_vec()).unwrap()
}

#[test]
fn debias_hand_values() {
    let p = pv(&[0.8, 0.2]);
    let d = debias(&p, &pv(&[0.8, 0.2]));
    assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.5).abs() < 1e-15);
    assert_eq!(debias(&p, &pv(&[0.5, 0.5])), p);
    // (0.6/0.3, 0.3/0.5, 0.1/0.2) = (2, 0.6, 0.5), sum 3.1
    let d = debias(&pv(&[0.6, 0.3, 0.1]), &pv(&[0.3, 0.5, 0.2]));
    for (a, b) in d.as_slice().iter().zip([2.0 / 3.1, 0.6 / 3.1, 0.5 / 3.1]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn appu_is_the_mean_prediction() {
    let mut r = rng(4);
    let model = ModelParams::init(3, &[5], 4, &mut r).unwrap();
    let pool = UnlabeledSet { features: gaussian(37, 3, &mut r) };
    let p = compute_appu(&model, &pool, &Augmentation::identity(), &mut r).unwrap();
    let probs = softmax_rows(model.forward_batch(pool.features.view()).unwrap().view());
    for k in 0..4 {
        // pairwise-free running sum in a different order
        let mut s = 0.0;
        for i in (0..37).rev() {
            s += probs[[i, k]];
        }
        assert!((p[k] - s / 37.0).abs() < 1e-10);
    }
}

#[test]
fn accumulation_follows_the_momentum_rule() {
    let mut state = AppU::new(2, 0.9).unwrap();
    state.seed(&pv(&[0.5, 0.5]));
    let next = accumulate_appu(&state, &ProbabilityVector::one_hot(2, 0));
    assert!((next.mean()[0] - 0.55).abs() < 1e-15);
    let frozen = accumulate_appu(&AppU::new(2, 1.0).unwrap(), &pv(&[0.3, 0.7]));
    // first observation always seeds
    assert_eq!(frozen.mean(), &pv(&[0.3, 0.7]));
    assert_eq!(accumulate_appu(&frozen, &pv(&[0.9, 0.1])).mean(), &pv(&[0.3, 0.7]));
}

#[test]
fn pseudo_labels_brute_force() {
    let probs = arr2(&[[0.97, 0.02, 0.01], [0.5, 0.3, 0.2], [0.05, 0.05, 0.9]]);
    let prior = pv(&[0.6, 0.3, 0.1]);
    let got = assign_pseudo_labels(probs.view(), Some(&prior), 0.8);
    let mut want = Vec::new();
    for row in probs.rows() {
        let w: Vec<f64> = row.iter().zip(prior.as_slice()).map(|(p, q)| p / q).collect();
        let s: f64 = w.iter().sum();
        let (k, m) = w.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        want.push((m / s >= 0.8).then_some(k));
    }
    assert_eq!(got.labels(), want.as_slice());
}

#[test]
fn threshold_edges() {
    let probs = arr2(&[[0.94, 0.03, 0.03], [0.96, 0.02, 0.02]]);
    let got = assign_pseudo_labels(probs.view(), None, 0.95);
    assert_eq!(got.labels(), &[None, Some(0)]);
    assert_eq!(assign_pseudo_labels(probs.view(), None, 0.0).confident_count(), 2);
    let flat = arr2(&[[0.5, 0.5]]);
    assert_eq!(assign_pseudo_labels(flat.view(), None, 1.0 + 1e-9).confident_count(), 0);
    // ties go to the lowest index
    assert_eq!(assign_pseudo_labels(flat.view(), None, 0.5).labels(), &[Some(0)]);
}

#[test]
fn dpl_with_uniform_model_output_matches_baseline() {
    let mut r = rng(1);
    let model = ModelParams::zeros(3, &[4], 3).unwrap();
    let pool = UnlabeledSet { features: gaussian(10, 3, &mut r) };
    let aug = Augmentation::identity();
    let (a, p) = dpl(&model, &pool, 0.3, &aug, &mut rng(2)).unwrap();
    let b = baseline_pseudo_label(&model, &pool, 0.3, &aug, &mut rng(2)).unwrap();
    assert!(p.is_exactly_uniform());
    assert_eq!(a, b);
}

fn fixture() -> (ModelParams, UnlabeledSet, PseudoLabelSet) {
    let mut r = rng(6);
    let model = ModelParams::init(3, &[4], 3, &mut r).unwrap();
    let pool = UnlabeledSet { features: gaussian(5, 3, &mut r) };
    let labels = PseudoLabelSet::new(3, vec![None, Some(2), None, Some(0), None]).unwrap();
    (model, pool, labels)
}

#[test]
fn unsupervised_loss_hand_sum() {
    let (model, pool, labels) = fixture();
    let out = unsupervised_loss(&model, &pool, &labels, &Augmentation::identity(), &mut rng(0)).unwrap();
    let p = softmax_rows(model.forward_batch(pool.features.view()).unwrap().view());
    let h1 = cross_entropy(&[0.0, 0.0, 1.0], p.row(1).as_slice().unwrap());
    let h2 = cross_entropy(&[1.0, 0.0, 0.0], p.row(3).as_slice().unwrap());
    assert!((out.loss - (h1 + h2) / 5.0).abs() < 1e-10);
}

#[test]
fn unsupervised_loss_vanishes_without_confident_samples() {
    let (model, pool, _) = fixture();
    let out = unsupervised_loss(&model, &pool, &PseudoLabelSet::empty(3, 5), &Augmentation::identity(), &mut rng(0)).unwrap();
    assert_eq!(out.loss, 0.0);
    assert!(out.grad.values().all(|g| g == 0.0));
}

#[test]
fn total_loss_is_linear() {
    let (model, pool, labels) = fixture();
    let mut r = rng(7);
    let labeled = LabeledSet { features: gaussian(4, 3, &mut r), labels: vec![0, 1, 2, 1] };
    let aug = Augmentation { weak_sigma: 0.1, strong_sigma: 0.4, mask_prob: 0.2 };
    let s = supervised_loss(&model, &labeled, &aug, &mut r).unwrap();
    let u = unsupervised_loss(&model, &pool, &labels, &aug, &mut r).unwrap();
    for lambda in [0.0, 0.5, 2.0] {
        let t = total_loss(&s, &u, lambda);
        assert_eq!(t.loss, s.loss + lambda * u.loss);
        for ((a, b), c) in t.grad.values().zip(s.grad.values()).zip(u.grad.values()) {
            assert!((a - (b + lambda * c)).abs() < 1e-12);
        }
    }
    assert_eq!(total_loss(&s, &u, 0.0).grad, s.grad);
}

#[test]
fn untrained_uniform_model_costs_ln_k() {
    let mut r = rng(5);
    let labeled = LabeledSet { features: gaussian(6, 3, &mut r), labels: vec![0, 1, 2, 3, 4, 0] };
    let s = supervised_loss(&ModelParams::zeros(3, &[4], 5).unwrap(), &labeled, &Augmentation::identity(), &mut r).unwrap();
    assert!((s.loss - 5f64.ln()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn debias_stays_on_simplex(seed in 0u64..100_000, k in 2usize..10) {
        let mut r = rng(seed);
        let p = random_simplex(k, &mut r);
        let q = random_simplex(k, &mut r);
        let d = debias(&p, &q);
        prop_assert!((d.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(d.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn uniform_prior_is_identity(seed in 0u64..100_000, k in 2usize..10) {
        let p = random_simplex(k, &mut rng(seed));
        let d = debias(&p, &ProbabilityVector::uniform(k));
        for (a, b) in d.as_slice().iter().zip(p.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn raising_a_prior_never_raises_rank(seed in 0u64..100_000, k in 2usize..8) {
        let mut r = rng(seed);
        let p = random_simplex(k, &mut r);
        let q = random_simplex(k, &mut r);
        let j = r.random_range(0..k);
        let mut w = q.as_slice().to_vec();
        w[j] *= 1.0 + 4.0 * r.random::<f64>();
        let q2 = ProbabilityVector::from_weights(&w).unwrap();
        let rank = |d: &ProbabilityVector| d.as_slice().iter().filter(|&&v| v > d[j]).count();
        prop_assert!(rank(&debias(&p, &q2)) >= rank(&debias(&p, &q)));
    }

    #[test]
    fn pseudo_labels_are_one_hot_or_empty(seed in 0u64..10_000, tau in 0.0f64..1.0) {
        let mut r = rng(seed);
        let probs: Array2<f64> = softmax_rows(gaussian(8, 4, &mut r).view());
        let labels = assign_pseudo_labels(probs.view(), Some(&random_simplex(4, &mut r)), tau);
        for i in 0..labels.len() {
            let row = labels.row(i);
            let s: f64 = row.iter().sum();
            prop_assert!(s == 0.0 || (s == 1.0 && row.iter().all(|&v| v == 0.0 || v == 1.0)));
        }
    }
}

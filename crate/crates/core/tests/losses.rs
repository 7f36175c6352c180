//! Loss values against naive reference implementations, and gradients of
//! loss∘forward against finite differences over every head parameter.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prk_core::head::PhraseHead;
use prk_core::losses::triplet_loss;
use prk_core::{distilling_loss, phrase_loss, total_loss, Distance, Distilling, LabeledBatch, LossConfig};

fn oracle_distilling(pred: &[f64], target: &[f64], variant: Distilling) -> f64 {
    let n = pred.len() as f64;
    match variant {
        Distilling::L1 => pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n,
        Distilling::Mse => pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n,
        Distilling::Kl => {
            let softmax = |x: &[f64]| {
                let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|v| v / s).collect::<Vec<_>>()
            };
            let p = softmax(target);
            let q = softmax(pred);
            p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum()
        }
        Distilling::Cosine => {
            let dot: f64 = pred.iter().zip(target).map(|(a, b)| a * b).sum();
            let na: f64 = pred.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nb: f64 = target.iter().map(|a| a * a).sum::<f64>().sqrt();
            1.0 - dot / (na * nb)
        }
    }
}

fn oracle_distance(a: &[f64], b: &[f64], metric: Distance) -> f64 {
    match metric {
        Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        Distance::CosineDistance => oracle_distilling(a, b, Distilling::Cosine),
    }
}

fn oracle_triplet(preds: &[Vec<f64>], classes: &[usize], margin: f64, metric: Distance) -> (f64, usize) {
    let mut hinges = Vec::new();
    let mut count = 0;
    for a in 0..preds.len() {
        for p in 0..preds.len() {
            for n in 0..preds.len() {
                if a == p || classes[a] != classes[p] || classes[a] == classes[n] {
                    continue;
                }
                count += 1;
                let h = oracle_distance(&preds[a], &preds[p], metric)
                    - oracle_distance(&preds[a], &preds[n], metric)
                    + margin;
                if h > 0.0 {
                    hinges.push(h);
                }
            }
        }
    }
    let value = if hinges.is_empty() {
        0.0
    } else {
        hinges.iter().sum::<f64>() / hinges.len() as f64
    };
    (value, count)
}

fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

const VARIANTS: [Distilling; 4] = [Distilling::L1, Distilling::Mse, Distilling::Kl, Distilling::Cosine];

#[test]
fn distilling_values_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let rows = gaussian_rows(&mut rng, 2, 9);
        for v in VARIANTS {
            let (value, _) = distilling_loss(&rows[0], &rows[1], v).unwrap();
            let want = oracle_distilling(&rows[0], &rows[1], v);
            assert!((value - want).abs() <= 1e-12 * want.abs().max(1.0), "{v:?}: {value} vs {want}");
        }
    }
}

#[test]
fn distilling_coincidence_is_zero() {
    let x = [0.3, -1.2, 2.0, 0.7];
    for v in VARIANTS {
        let (value, _) = distilling_loss(&x, &x, v).unwrap();
        assert!(value.abs() <= 1e-15, "{v:?}: {value}");
    }
}

#[test]
fn triplet_values_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let classes = [0, 1, 0, 2, 1, 2, 0, 1];
    for trial in 0..40 {
        let preds = gaussian_rows(&mut rng, classes.len(), 6);
        let metric = if trial % 2 == 0 { Distance::Euclidean } else { Distance::CosineDistance };
        let margin = rng.random_range(0.0..1.0);
        let out = triplet_loss(&preds, &classes, margin, metric).unwrap();
        let (want, count) = oracle_triplet(&preds, &classes, margin, metric);
        assert_eq!(out.triplets, count);
        assert!((out.value - want).abs() <= 1e-12, "{} vs {want}", out.value);
    }
}

#[test]
fn phrase_loss_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let preds = gaussian_rows(&mut rng, 6, 12);
    let targets = gaussian_rows(&mut rng, 6, 12);
    let classes = vec![0, 0, 1, 1, 2, 2];
    let batch = LabeledBatch::new(preds.clone(), targets.clone(), classes.clone()).unwrap();

    let cfg = LossConfig {
        beta: 0.0,
        ..LossConfig::default()
    };
    let out = phrase_loss(&batch, &cfg).unwrap();
    let mean = preds
        .iter()
        .zip(&targets)
        .map(|(p, t)| distilling_loss(p, t, Distilling::L1).unwrap().0)
        .sum::<f64>()
        / 6.0;
    assert_eq!(out.value, mean);

    let cfg = LossConfig::default();
    let out = phrase_loss(&batch, &cfg).unwrap();
    let t = triplet_loss(&preds, &classes, cfg.margin, cfg.distance).unwrap();
    assert_eq!(out.value, out.distilling + 10.0 * t.value);
    assert_eq!(total_loss(0.75, out.value, 0.1).unwrap(), 0.75 + 0.1 * out.value);
}

proptest! {
    #[test]
    fn phrase_loss_is_permutation_invariant(seed in 0u64..1000, shift in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds = gaussian_rows(&mut rng, 6, 6);
        let targets = gaussian_rows(&mut rng, 6, 6);
        let classes = vec![0, 1, 2, 0, 1, 2];
        let rot = |v: &Vec<Vec<f64>>| {
            let mut v = v.clone();
            v.rotate_left(shift);
            v
        };
        let mut rc = classes.clone();
        rc.rotate_left(shift);
        for distilling in VARIANTS {
            let cfg = LossConfig { distilling, ..LossConfig::default() };
            let a = phrase_loss(&LabeledBatch::new(preds.clone(), targets.clone(), classes.clone()).unwrap(), &cfg).unwrap();
            let b = phrase_loss(&LabeledBatch::new(rot(&preds), rot(&targets), rc.clone()).unwrap(), &cfg).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
            let mut g = a.gradients.clone();
            g.rotate_left(shift);
            for (x, y) in g.iter().flatten().zip(b.gradients.iter().flatten()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

/// Phrase loss of a head over a fixed batch, through the forward pass.
fn head_loss(head: &PhraseHead, inputs: &[Vec<f64>], targets: &[Vec<f64>], classes: &[usize], cfg: &LossConfig) -> f64 {
    let preds = inputs.iter().map(|x| head.forward(x).unwrap()).collect();
    let batch = LabeledBatch::new(preds, targets.to_vec(), classes.to_vec()).unwrap();
    phrase_loss(&batch, cfg).unwrap().value
}

#[test]
fn head_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let widths = [5, 7, 6, 6];
    let classes = vec![0, 0, 1, 1];
    for distilling in [Distilling::Mse, Distilling::Kl, Distilling::Cosine] {
        let head = PhraseHead::init(widths, &mut rng).unwrap();
        let inputs = gaussian_rows(&mut rng, 4, 5);
        let targets = gaussian_rows(&mut rng, 4, 6);
        let cfg = LossConfig {
            distilling,
            margin: 0.3,
            ..LossConfig::default()
        };
        let caches: Vec<_> = inputs.iter().map(|x| head.forward_cached(x).unwrap()).collect();
        let batch = LabeledBatch::new(
            caches.iter().map(|c| c.output.clone()).collect(),
            targets.clone(),
            classes.clone(),
        )
        .unwrap();
        let out = phrase_loss(&batch, &cfg).unwrap();
        let mut analytic = vec![0.0; head.params().len()];
        for (c, g) in caches.iter().zip(&out.gradients) {
            head.backward(c, g, &mut analytic);
        }

        let h = 1e-6;
        let mut probe = head.clone();
        let mut worst = 0.0f64;
        for i in 0..analytic.len() {
            let base = head.params()[i];
            probe.params_mut()[i] = base + h;
            let up = head_loss(&probe, &inputs, &targets, &classes, &cfg);
            probe.params_mut()[i] = base - h;
            let down = head_loss(&probe, &inputs, &targets, &classes, &cfg);
            probe.params_mut()[i] = base;
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
        }
        assert!(worst <= 1e-5, "{distilling:?}: {worst}");
    }
}

//! Central finite-difference checks of the analytic loss gradients.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    distance, distilling_loss, phrase_loss, triplet_loss, Distance, Distilling, LabeledBatch,
    LossConfig,
};

/// Step of the fourth-order central stencil; its span stays inside the
/// near-hinge offset.
pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative error.
const FLOOR: f64 = 1e-4;
/// Hinge offset used for near-kink trials.
const NEAR_HINGE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradcheckLoss {
    L1,
    Mse,
    Kl,
    Cosine,
    Triplet,
    Phrase,
}

impl GradcheckLoss {
    pub const ALL: [GradcheckLoss; 6] = [
        GradcheckLoss::L1,
        GradcheckLoss::Mse,
        GradcheckLoss::Kl,
        GradcheckLoss::Cosine,
        GradcheckLoss::Triplet,
        GradcheckLoss::Phrase,
    ];
}

impl FromStr for GradcheckLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(GradcheckLoss::L1),
            "mse" => Ok(GradcheckLoss::Mse),
            "kl" => Ok(GradcheckLoss::Kl),
            "cosine" => Ok(GradcheckLoss::Cosine),
            "triplet" => Ok(GradcheckLoss::Triplet),
            "phrase" => Ok(GradcheckLoss::Phrase),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub loss: GradcheckLoss,
    pub trials: usize,
    pub near_hinge_trials: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn max_rel_error<F>(x: &[f64], analytic: &[f64], mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut at = |k: f64| {
            probe[i] = x[i] + k * STEP;
            f(&probe)
        };
        let numeric = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * STEP);
        probe[i] = x[i];
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

const SLOT: usize = 4;
const BATCH: usize = 6;
const CLASSES: [usize; BATCH] = [0, 0, 1, 1, 2, 2];

fn unflatten(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    flat.chunks_exact(width).map(<[f64]>::to_vec).collect()
}

/// Hinge arguments `d(A,P) - d(A,N)` (before adding the margin) of every
/// valid triplet.
fn triplet_gaps(preds: &[Vec<f64>], metric: Distance) -> Result<Vec<f64>> {
    let mut gaps = Vec::new();
    for a in 0..preds.len() {
        for p in 0..preds.len() {
            if p == a || CLASSES[p] != CLASSES[a] {
                continue;
            }
            for n in 0..preds.len() {
                if CLASSES[n] == CLASSES[a] {
                    continue;
                }
                gaps.push(distance(&preds[a], &preds[p], metric)? - distance(&preds[a], &preds[n], metric)?);
            }
        }
    }
    Ok(gaps)
}

/// Picks a margin that puts one triplet just past the hinge, or `None`
/// when no triplet admits a non-negative margin or another triplet lands
/// too close to its kink.
fn near_hinge_margin(preds: &[Vec<f64>], metric: Distance) -> Result<Option<f64>> {
    let gaps = triplet_gaps(preds, metric)?;
    let Some(chosen) = gaps.iter().copied().filter(|g| *g < -NEAR_HINGE).reduce(f64::max) else {
        return Ok(None);
    };
    let margin = -chosen + NEAR_HINGE;
    let clear = gaps
        .iter()
        .filter(|g| **g != chosen)
        .all(|g| (g + margin).abs() > 10.0 * NEAR_HINGE);
    Ok(clear.then_some(margin))
}

fn check_trial(loss: GradcheckLoss, rng: &mut ChaCha8Rng, near_hinge: bool) -> Result<(f64, bool)> {
    let dim = 3 * SLOT;
    let distill = |v| match v {
        GradcheckLoss::L1 => Distilling::L1,
        GradcheckLoss::Mse => Distilling::Mse,
        GradcheckLoss::Kl => Distilling::Kl,
        _ => Distilling::Cosine,
    };
    match loss {
        GradcheckLoss::L1 | GradcheckLoss::Mse | GradcheckLoss::Kl | GradcheckLoss::Cosine => {
            let variant = distill(loss);
            let pred = gaussian(rng, dim);
            let target = gaussian(rng, dim);
            let (_, grad) = distilling_loss(&pred, &target, variant)?;
            let err = max_rel_error(&pred, &grad, |p| {
                distilling_loss(p, &target, variant).map(|r| r.0).unwrap_or(f64::NAN)
            });
            Ok((err, false))
        }
        GradcheckLoss::Triplet | GradcheckLoss::Phrase => {
            let metric = if rng.random::<bool>() {
                Distance::Euclidean
            } else {
                Distance::CosineDistance
            };
            let (flat, margin, at_hinge) = loop {
                let flat = gaussian(rng, BATCH * dim);
                let preds = unflatten(&flat, dim);
                if near_hinge {
                    if let Some(m) = near_hinge_margin(&preds, metric)? {
                        break (flat, m, true);
                    }
                    continue;
                }
                let margin = rng.random_range(0.1..1.5);
                let gaps = triplet_gaps(&preds, metric)?;
                if gaps.iter().all(|g| (g + margin).abs() > 10.0 * NEAR_HINGE) {
                    break (flat, margin, false);
                }
            };
            if loss == GradcheckLoss::Triplet {
                let out = triplet_loss(&unflatten(&flat, dim), &CLASSES, margin, metric)?;
                let analytic: Vec<f64> = out.gradients.concat();
                let err = max_rel_error(&flat, &analytic, |x| {
                    triplet_loss(&unflatten(x, dim), &CLASSES, margin, metric)
                        .map(|o| o.value)
                        .unwrap_or(f64::NAN)
                });
                return Ok((err, at_hinge));
            }
            let targets = unflatten(&gaussian(rng, BATCH * dim), dim);
            let config = LossConfig {
                margin,
                distance: metric,
                distilling: [Distilling::L1, Distilling::Mse, Distilling::Kl, Distilling::Cosine]
                    [rng.random_range(0..4)],
                ..LossConfig::default()
            };
            let batch = LabeledBatch::new(unflatten(&flat, dim), targets.clone(), CLASSES.to_vec())?;
            let analytic: Vec<f64> = phrase_loss(&batch, &config)?.gradients.concat();
            let err = max_rel_error(&flat, &analytic, |x| {
                let b = LabeledBatch {
                    predictions: unflatten(x, dim),
                    targets: targets.clone(),
                    class_ids: CLASSES.to_vec(),
                };
                phrase_loss(&b, &config).map(|o| o.value).unwrap_or(f64::NAN)
            });
            Ok((err, at_hinge))
        }
    }
}

/// Runs `trials` random checks; for the triplet-bearing losses every other
/// trial places one triplet just past its hinge.
pub fn run_gradcheck(loss: GradcheckLoss, trials: usize, seed: u64) -> Result<GradcheckReport> {
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut near = 0usize;
    for t in 0..trials {
        let (err, at_hinge) = check_trial(loss, &mut rng, t % 2 == 1)?;
        if err.is_nan() {
            worst = f64::NAN;
        } else {
            worst = worst.max(err);
        }
        near += at_hinge as usize;
    }
    Ok(GradcheckReport {
        loss,
        trials,
        near_hinge_trials: near,
        max_rel_error: worst,
        tolerance: TOLERANCE,
        passed: worst <= TOLERANCE,
    })
}

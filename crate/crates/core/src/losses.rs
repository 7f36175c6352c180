//! Phrase-branch losses with analytic gradients.
//!
//! `L_phrase = distilling + beta * triplet` and `L_total = hoi + alpha * L_phrase`.
//! Distilling variants regress a prediction onto its ground-truth phrase
//! embedding; the triplet term separates predictions of different classes
//! with a margin, using batch-all mining over the predictions.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{dot, euclidean, norm};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distilling {
    #[default]
    L1,
    Mse,
    /// KL(softmax(target) || softmax(pred)).
    Kl,
    /// `1 - cos(pred, target)`.
    Cosine,
}

impl FromStr for Distilling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Distilling::L1),
            "mse" => Ok(Distilling::Mse),
            "kl" => Ok(Distilling::Kl),
            "cosine" | "cos" => Ok(Distilling::Cosine),
            other => Err(Error::Config(format!("unknown distilling loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`.
    CosineDistance,
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "cosine" | "cosine_distance" => Ok(Distance::CosineDistance),
            other => Err(Error::Config(format!("unknown distance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mining {
    #[default]
    BatchAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
    pub distilling: Distilling,
    pub distance: Distance,
    pub mining: Mining,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.1,
            beta: 10.0,
            margin: 0.5,
            distilling: Distilling::L1,
            distance: Distance::Euclidean,
            mining: Mining::BatchAll,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("margin", self.margin)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

/// Gradient of `cos(a, b)` with respect to `a`.
fn cosine_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let cos = dot(a, b) / (na * nb);
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| y / (na * nb) - cos * x / (na * na))
        .collect();
    Ok((cos, grad))
}

/// Returns the loss value and its gradient with respect to `pred`.
pub fn distilling_loss(pred: &[f64], target: &[f64], variant: Distilling) -> Result<(f64, Vec<f64>)> {
    check_dims(pred, target)?;
    if pred.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let n = pred.len() as f64;
    let out = match variant {
        Distilling::L1 => {
            let value = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
            let grad = pred
                .iter()
                .zip(target)
                .map(|(p, t)| {
                    let d = p - t;
                    if d > 0.0 {
                        1.0 / n
                    } else if d < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    }
                })
                .collect();
            (value, grad)
        }
        Distilling::Mse => {
            let value = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
            let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
            (value, grad)
        }
        Distilling::Kl => {
            let log_p = log_softmax(target);
            let log_q = log_softmax(pred);
            let value = log_p
                .iter()
                .zip(&log_q)
                .map(|(lp, lq)| lp.exp() * (lp - lq))
                .sum::<f64>()
                .max(0.0);
            let grad = log_q.iter().zip(&log_p).map(|(lq, lp)| lq.exp() - lp.exp()).collect();
            (value, grad)
        }
        Distilling::Cosine => {
            let (cos, g) = cosine_grad(pred, target)?;
            (1.0 - cos, g.into_iter().map(|x| -x).collect())
        }
    };
    Ok(out)
}

/// Distance and its gradients with respect to both operands.
fn distance_with_grads(a: &[f64], b: &[f64], metric: Distance) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    match metric {
        Distance::Euclidean => {
            let d = euclidean(a, b);
            if d == 0.0 {
                let zero = vec![0.0; a.len()];
                return Ok((0.0, zero.clone(), zero));
            }
            let ga: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) / d).collect();
            let gb = ga.iter().map(|g| -g).collect();
            Ok((d, ga, gb))
        }
        Distance::CosineDistance => {
            let (cos, ga) = cosine_grad(a, b)?;
            let (_, gb) = cosine_grad(b, a)?;
            Ok((
                1.0 - cos,
                ga.into_iter().map(|g| -g).collect(),
                gb.into_iter().map(|g| -g).collect(),
            ))
        }
    }
}

pub fn distance(a: &[f64], b: &[f64], metric: Distance) -> Result<f64> {
    check_dims(a, b)?;
    Ok(distance_with_grads(a, b, metric)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletOutput {
    /// Mean hinge over triplets with nonzero loss; 0 when none.
    pub value: f64,
    /// Gradient per prediction.
    pub gradients: Vec<Vec<f64>>,
    /// Number of valid `(anchor, positive, negative)` triplets.
    pub triplets: usize,
    /// Triplets with a strictly positive hinge.
    pub active: usize,
}

/// Hinge `max(d(A,P) - d(A,N) + m, 0)` for one triplet.
pub fn triplet_hinge(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}

/// Batch-all triplet loss over `predictions`.
///
/// Every prediction is an anchor; positives share its class id, negatives
/// do not. The value is the mean over triplets whose hinge is positive.
pub fn triplet_loss<V: AsRef<[f64]>>(
    predictions: &[V],
    class_ids: &[usize],
    margin: f64,
    metric: Distance,
) -> Result<TripletOutput> {
    if predictions.len() != class_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: predictions.len(),
            found: class_ids.len(),
        });
    }
    let n = predictions.len();
    let dim = predictions.first().map_or(0, |p| p.as_ref().len());
    for p in predictions {
        check_dims(predictions[0].as_ref(), p.as_ref())?;
    }

    let mut dist = vec![0.0; n * n];
    let mut grads_ij: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (d, gi, gj) =
                distance_with_grads(predictions[i].as_ref(), predictions[j].as_ref(), metric)?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
            grads_ij[i * n + j] = Some((gi, gj));
        }
    }

    // coef[i*n+j] accumulates d(loss_sum)/d(dist(i, j)) for i < j.
    let mut coef = vec![0.0; n * n];
    let mut sum = 0.0;
    let mut triplets = 0usize;
    let mut active = 0usize;
    let pair = |i: usize, j: usize| if i < j { i * n + j } else { j * n + i };
    for a in 0..n {
        for p in 0..n {
            if p == a || class_ids[p] != class_ids[a] {
                continue;
            }
            for neg in 0..n {
                if class_ids[neg] == class_ids[a] {
                    continue;
                }
                triplets += 1;
                let arg = dist[a * n + p] - dist[a * n + neg] + margin;
                if arg > 0.0 {
                    sum += arg;
                    active += 1;
                    coef[pair(a, p)] += 1.0;
                    coef[pair(a, neg)] -= 1.0;
                }
            }
        }
    }

    let mut gradients = vec![vec![0.0; dim]; n];
    if active == 0 {
        return Ok(TripletOutput {
            value: 0.0,
            gradients,
            triplets,
            active,
        });
    }
    let scale = 1.0 / active as f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let c = coef[i * n + j];
            if c == 0.0 {
                continue;
            }
            let (gi, gj) = grads_ij[i * n + j].as_ref().expect("pair computed");
            let w = c * scale;
            for (g, x) in gradients[i].iter_mut().zip(gi) {
                *g += w * x;
            }
            for (g, x) in gradients[j].iter_mut().zip(gj) {
                *g += w * x;
            }
        }
    }
    Ok(TripletOutput {
        value: sum * scale,
        gradients,
        triplets,
        active,
    })
}

/// Predictions, their ground-truth targets and class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBatch {
    pub predictions: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub class_ids: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(predictions: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, class_ids: Vec<usize>) -> Result<Self> {
        if predictions.len() != targets.len() || predictions.len() != class_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: predictions.len(),
                found: targets.len().min(class_ids.len()),
            });
        }
        Ok(LabeledBatch {
            predictions,
            targets,
            class_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseLossOutput {
    pub value: f64,
    pub distilling: f64,
    pub triplet: f64,
    pub triplets: usize,
    pub active_triplets: usize,
    /// Gradient per prediction.
    pub gradients: Vec<Vec<f64>>,
}

/// `mean_i distilling(pred_i, target_i) + beta * triplet(predictions)`.
pub fn phrase_loss(batch: &LabeledBatch, config: &LossConfig) -> Result<PhraseLossOutput> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptySplit("phrase loss on an empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut distilling = 0.0;
    let mut gradients = Vec::with_capacity(batch.len());
    for (p, t) in batch.predictions.iter().zip(&batch.targets) {
        let (v, g) = distilling_loss(p, t, config.distilling)?;
        distilling += v;
        gradients.push(g.into_iter().map(|x| x / n).collect::<Vec<f64>>());
    }
    distilling /= n;

    let (triplet, triplets, active_triplets) = if config.beta > 0.0 {
        let t = triplet_loss(&batch.predictions, &batch.class_ids, config.margin, config.distance)?;
        for (g, tg) in gradients.iter_mut().zip(&t.gradients) {
            for (x, y) in g.iter_mut().zip(tg) {
                *x += config.beta * y;
            }
        }
        (t.value, t.triplets, t.active)
    } else {
        (0.0, 0, 0)
    };

    Ok(PhraseLossOutput {
        value: distilling + config.beta * triplet,
        distilling,
        triplet,
        triplets,
        active_triplets,
        gradients,
    })
}

/// `hoi_loss + alpha * phrase_loss`.
pub fn total_loss(hoi_loss: f64, phrase_loss: f64, alpha: f64) -> Result<f64> {
    for (name, v) in [("hoi loss", hoi_loss), ("phrase loss", phrase_loss), ("alpha", alpha)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue(format!("{name} = {v}")));
        }
    }
    Ok(hoi_loss + alpha * phrase_loss)
}

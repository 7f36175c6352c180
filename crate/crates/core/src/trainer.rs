//! Toy-scale phrase-head training with the full loss stack.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composition::{compose, CompositionConfig};
use crate::dataset::{Split, SyntheticDataset};
use crate::error::{Error, Result};
use crate::head::PhraseHead;
use crate::losses::{phrase_loss, total_loss, LabeledBatch, LossConfig};
use crate::lut::LookUpTable;
use crate::neighborhood::Neighborhoods;
use crate::optim::{LrSchedule, Optimizer, OptimizerKind};
use crate::phrase::{ConcatEncoder, PhraseEncoder, RelationalPhrase};
use crate::vecmath::euclidean;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// Resample composed targets for every sample of every iteration.
    pub composition: bool,
    pub composition_config: CompositionConfig,
    /// Train a linear HOI classifier alongside and report `L_total`.
    pub hoi_surrogate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            batch_size: 64,
            epochs: 50,
            seed: 7,
            loss: LossConfig::default(),
            composition: true,
            composition_config: CompositionConfig::default(),
            hoi_surrogate: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        self.loss.validate()?;
        self.composition_config.validate()
    }
}

/// Where training targets come from: clean LUT entries, optionally
/// replaced by encodings of composed phrases.
pub struct TargetSpace<'a> {
    pub lut: &'a LookUpTable,
    pub encoder: ConcatEncoder<'a>,
    pub neighborhoods: Option<&'a Neighborhoods>,
    cache: HashMap<RelationalPhrase, Vec<f64>>,
}

impl<'a> TargetSpace<'a> {
    pub fn new(
        lut: &'a LookUpTable,
        encoder: ConcatEncoder<'a>,
        neighborhoods: Option<&'a Neighborhoods>,
    ) -> Self {
        TargetSpace {
            lut,
            encoder,
            neighborhoods,
            cache: HashMap::new(),
        }
    }

    fn target(&mut self, phrase: &RelationalPhrase) -> Result<Vec<f64>> {
        if let Some(e) = self.lut.embedding(phrase) {
            return Ok(e.values().to_vec());
        }
        if let Some(v) = self.cache.get(phrase) {
            return Ok(v.clone());
        }
        let v = self.encoder.encode(phrase)?.into_inner();
        self.cache.insert(phrase.clone(), v.clone());
        Ok(v)
    }
}

/// One assembled mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledBatch {
    pub indices: Vec<usize>,
    pub class_ids: Vec<usize>,
    pub target_phrases: Vec<RelationalPhrase>,
    pub targets: Vec<Vec<f64>>,
}

impl AssembledBatch {
    pub fn composed(&self, dataset: &SyntheticDataset) -> usize {
        self.class_ids
            .iter()
            .zip(&self.target_phrases)
            .filter(|(&c, p)| dataset.phrases[c] != **p)
            .count()
    }
}

/// Builds targets for the training samples at `indices`. Composition only
/// touches the target phrase; inputs and class ids come from the dataset.
pub fn assemble_batch(
    dataset: &SyntheticDataset,
    indices: &[usize],
    targets: &mut TargetSpace<'_>,
    composition: Option<&CompositionConfig>,
    rng: &mut ChaCha8Rng,
) -> Result<AssembledBatch> {
    let mut class_ids = Vec::with_capacity(indices.len());
    let mut target_phrases = Vec::with_capacity(indices.len());
    let mut vectors = Vec::with_capacity(indices.len());
    for &i in indices {
        let class = dataset.train.labels[i];
        let clean = &dataset.phrases[class];
        let phrase = match (composition, targets.neighborhoods) {
            (Some(cfg), Some(n)) => compose(clean, n, cfg, rng),
            _ => clean.clone(),
        };
        vectors.push(targets.target(&phrase)?);
        class_ids.push(class);
        target_phrases.push(phrase);
    }
    Ok(AssembledBatch {
        indices: indices.to_vec(),
        class_ids,
        target_phrases,
        targets: vectors,
    })
}

/// Linear softmax classifier over the raw inputs; stands in for the HOI
/// branch and only contributes a scalar loss.
#[derive(Debug, Clone)]
pub struct HoiSurrogate {
    classes: usize,
    input_dim: usize,
    params: Vec<f64>,
}

impl HoiSurrogate {
    pub fn new(classes: usize, input_dim: usize) -> Self {
        HoiSurrogate {
            classes,
            input_dim,
            params: vec![0.0; classes * input_dim + classes],
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (w, b) = self.params.split_at(self.classes * self.input_dim);
        w.chunks_exact(self.input_dim)
            .zip(b)
            .map(|(row, bias)| bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let z = self.logits(x);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// Mean cross-entropy over the batch; gradients are accumulated.
    fn loss_and_grad(&self, inputs: &[&[f64]], labels: &[usize], grads: &mut [f64]) -> f64 {
        let n = inputs.len() as f64;
        let split = self.classes * self.input_dim;
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            let mut p = self.probabilities(x);
            loss -= p[y].max(1e-300).ln();
            p[y] -= 1.0;
            for (k, pk) in p.iter().enumerate() {
                let d = pk / n;
                grads[split + k] += d;
                for (g, xv) in grads[k * self.input_dim..(k + 1) * self.input_dim].iter_mut().zip(x.iter()) {
                    *g += d * xv;
                }
            }
        }
        loss / n
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let z = self.logits(x);
        (0..z.len()).fold(0, |best, k| if z[k] > z[best] { k } else { best })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub phrase_loss: f64,
    pub distilling: f64,
    pub triplet: f64,
    pub hoi_loss: Option<f64>,
    pub total_loss: f64,
    /// Fraction of targets replaced by composition.
    pub composed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub top1: f64,
    pub top5: f64,
    pub rare_top1: Option<f64>,
    pub rare_top5: Option<f64>,
    pub nonrare_top1: Option<f64>,
    pub nonrare_top5: Option<f64>,
    pub per_class_top1: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStats {
    /// Mean distance from a prediction to its class centroid.
    pub mean_intra_class_distance: f64,
    pub min_inter_class_centroid_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub config: TrainConfig,
    pub class_counts: Vec<usize>,
    pub rare_classes: usize,
    pub epochs: Vec<EpochStats>,
    pub metrics: Metrics,
    pub embedding_stats: EmbeddingStats,
    pub hoi_accuracy: Option<f64>,
}

fn class_positions(dataset: &SyntheticDataset, lut: &LookUpTable) -> Result<Vec<usize>> {
    dataset
        .phrases
        .iter()
        .map(|p| {
            lut.position(p)
                .ok_or_else(|| Error::Config(format!("class phrase {:?} missing from LUT", p.text())))
        })
        .collect()
}

fn check_dims(dataset: &SyntheticDataset, head: &PhraseHead, lut: &LookUpTable) -> Result<()> {
    if head.input_dim() != dataset.config.input_dim {
        return Err(Error::DimensionMismatch {
            expected: dataset.config.input_dim,
            found: head.input_dim(),
        });
    }
    if head.output_dim() != lut.dimension() {
        return Err(Error::DimensionMismatch {
            expected: lut.dimension(),
            found: head.output_dim(),
        });
    }
    Ok(())
}

fn fraction(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Top-1 / top-5 LUT retrieval accuracy of `head` on `split`, overall and
/// by the dataset's rare/non-rare partition.
pub fn evaluate(
    head: &PhraseHead,
    dataset: &SyntheticDataset,
    split: &Split,
    lut: &LookUpTable,
) -> Result<Metrics> {
    if split.is_empty() {
        return Err(Error::EmptySplit("evaluation split has no samples".into()));
    }
    check_dims(dataset, head, lut)?;
    let positions = class_positions(dataset, lut)?;
    let k = 5.min(lut.len());
    let classes = dataset.num_classes();
    let mut per_class = vec![(0usize, 0usize); classes];
    let (mut top1, mut top5) = (0usize, 0usize);
    let (mut rare, mut rare1, mut rare5) = (0usize, 0usize, 0usize);
    let (mut nonrare, mut nonrare1, mut nonrare5) = (0usize, 0usize, 0usize);
    for (x, &label) in split.inputs.iter().zip(&split.labels) {
        let out = head.forward(x)?;
        let ranked = lut.rank(&out, k)?;
        let want = positions[label];
        let hit1 = ranked[0].0 == want;
        let hit5 = ranked.iter().any(|(i, _)| *i == want);
        top1 += hit1 as usize;
        top5 += hit5 as usize;
        per_class[label].0 += hit1 as usize;
        per_class[label].1 += 1;
        if dataset.rare[label] {
            rare += 1;
            rare1 += hit1 as usize;
            rare5 += hit5 as usize;
        } else {
            nonrare += 1;
            nonrare1 += hit1 as usize;
            nonrare5 += hit5 as usize;
        }
    }
    let n = split.len();
    Ok(Metrics {
        samples: n,
        top1: top1 as f64 / n as f64,
        top5: top5 as f64 / n as f64,
        rare_top1: fraction(rare1, rare),
        rare_top5: fraction(rare5, rare),
        nonrare_top1: fraction(nonrare1, nonrare),
        nonrare_top5: fraction(nonrare5, nonrare),
        per_class_top1: per_class.iter().map(|&(h, t)| fraction(h, t)).collect(),
    })
}

pub fn embedding_stats(
    head: &PhraseHead,
    split: &Split,
    num_classes: usize,
) -> Result<EmbeddingStats> {
    if split.is_empty() {
        return Err(Error::EmptySplit("no samples for embedding statistics".into()));
    }
    let outputs: Vec<Vec<f64>> = split
        .inputs
        .iter()
        .map(|x| head.forward(x))
        .collect::<Result<_>>()?;
    let dim = head.output_dim();
    let mut centroids = vec![vec![0.0; dim]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (o, &l) in outputs.iter().zip(&split.labels) {
        counts[l] += 1;
        for (c, v) in centroids[l].iter_mut().zip(o) {
            *c += v;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        if n > 0 {
            c.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    let intra = outputs
        .iter()
        .zip(&split.labels)
        .map(|(o, &l)| euclidean(o, &centroids[l]))
        .sum::<f64>()
        / outputs.len() as f64;
    let present: Vec<usize> = (0..num_classes).filter(|&c| counts[c] > 0).collect();
    let mut min_inter = f64::INFINITY;
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            min_inter = min_inter.min(euclidean(&centroids[a], &centroids[b]));
        }
    }
    Ok(EmbeddingStats {
        mean_intra_class_distance: intra,
        min_inter_class_centroid_distance: min_inter,
    })
}

/// Trains `head` in place and reports the loss curve and final test metrics.
pub fn train(
    dataset: &SyntheticDataset,
    head: &mut PhraseHead,
    targets: &mut TargetSpace<'_>,
    config: &TrainConfig,
) -> Result<TrainingReport> {
    config.validate()?;
    check_dims(dataset, head, targets.lut)?;
    class_positions(dataset, targets.lut)?;
    if dataset.train.is_empty() {
        return Err(Error::EmptySplit("training split has no samples".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, head.params().len());
    let mut hoi = config
        .hoi_surrogate
        .then(|| HoiSurrogate::new(dataset.num_classes(), dataset.config.input_dim));
    let mut hoi_opt = hoi
        .as_ref()
        .map(|h| Optimizer::new(config.optimizer, config.learning_rate, h.params.len()));
    let composition = config.composition.then_some(&config.composition_config);

    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut grads = vec![0.0; head.params().len()];
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let rate = config.lr_schedule.rate(config.learning_rate, epoch, config.epochs);
        optimizer.set_learning_rate(rate);
        if let Some(opt) = &mut hoi_opt {
            opt.set_learning_rate(rate);
        }
        let mut sums = [0.0f64; 5];
        let mut composed = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = assemble_batch(dataset, chunk, targets, composition, &mut rng)?;
            composed += batch.composed(dataset);
            let inputs: Vec<&[f64]> = chunk.iter().map(|&i| dataset.train.inputs[i].as_slice()).collect();

            let caches = inputs
                .iter()
                .map(|x| head.forward_cached(x))
                .collect::<Result<Vec<_>>>()?;
            let labeled = LabeledBatch::new(
                caches.iter().map(|c| c.output.clone()).collect(),
                batch.targets,
                batch.class_ids,
            )?;
            let out = phrase_loss(&labeled, &config.loss)?;

            let (hoi_loss, scale) = match (&mut hoi, &mut hoi_opt) {
                (Some(h), Some(opt)) => {
                    let mut g = vec![0.0; h.params.len()];
                    let l = h.loss_and_grad(&inputs, &labeled.class_ids, &mut g);
                    opt.step(&mut h.params, &g);
                    (Some(l), config.loss.alpha)
                }
                _ => (None, 1.0),
            };
            let total = match hoi_loss {
                Some(l) => total_loss(l, out.value, config.loss.alpha)?,
                None => out.value,
            };
            if !total.is_finite() {
                return Err(Error::Diverged { epoch });
            }

            grads.iter_mut().for_each(|g| *g = 0.0);
            for (cache, g) in caches.iter().zip(&out.gradients) {
                if scale != 1.0 {
                    let scaled: Vec<f64> = g.iter().map(|v| v * scale).collect();
                    head.backward(cache, &scaled, &mut grads);
                } else {
                    head.backward(cache, g, &mut grads);
                }
            }
            optimizer.step(head.params_mut(), &grads);
            if !head.is_finite() {
                return Err(Error::Diverged { epoch });
            }

            let w = chunk.len() as f64;
            sums[0] += w * out.value;
            sums[1] += w * out.distilling;
            sums[2] += w * out.triplet;
            sums[3] += w * hoi_loss.unwrap_or(0.0);
            sums[4] += w * total;
        }
        let n = dataset.train.len() as f64;
        epochs.push(EpochStats {
            epoch,
            phrase_loss: sums[0] / n,
            distilling: sums[1] / n,
            triplet: sums[2] / n,
            hoi_loss: hoi.as_ref().map(|_| sums[3] / n),
            total_loss: sums[4] / n,
            composed_fraction: composed as f64 / n,
        });
    }

    let metrics = evaluate(head, dataset, &dataset.test, targets.lut)?;
    let embedding_stats = embedding_stats(head, &dataset.test, dataset.num_classes())?;
    let hoi_accuracy = hoi.as_ref().map(|h| {
        let hits = dataset
            .test
            .inputs
            .iter()
            .zip(&dataset.test.labels)
            .filter(|(x, &l)| h.predict(x) == l)
            .count();
        hits as f64 / dataset.test.len() as f64
    });
    Ok(TrainingReport {
        config: config.clone(),
        class_counts: dataset.class_counts.clone(),
        rare_classes: dataset.rare_classes(),
        epochs,
        metrics,
        embedding_stats,
        hoi_accuracy,
    })
}

//! Long-tailed synthetic stand-in for backbone features.
//!
//! Each class owns an orthogonal prototype in the input space; samples are
//! the prototype plus isotropic Gaussian noise. Training class sizes follow
//! a Zipf law and classes with fewer than `rare_threshold` training samples
//! are rare. The test split is balanced.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixture::orthonormal_basis;
use crate::phrase::RelationalPhrase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub input_dim: usize,
    pub train_size: usize,
    pub test_per_class: usize,
    pub zipf_exponent: f64,
    /// Per-component noise standard deviation.
    pub noise: f64,
    /// Prototype norm.
    pub prototype_norm: f64,
    pub rare_threshold: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_classes: 30,
            input_dim: 256,
            train_size: 5000,
            test_per_class: 20,
            zipf_exponent: 1.5,
            noise: 1.0,
            prototype_norm: 16.0,
            rare_threshold: 30,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub prototypes: Vec<Vec<f64>>,
    /// Phrase of each class.
    pub phrases: Vec<RelationalPhrase>,
    pub class_counts: Vec<usize>,
    pub rare: Vec<bool>,
    pub train: Split,
    pub test: Split,
}

/// Zipf class sizes summing exactly to `total`, each at least one.
pub fn zipf_counts(num_classes: usize, total: usize, exponent: f64) -> Result<Vec<usize>> {
    if num_classes == 0 || total < num_classes {
        return Err(Error::Config(format!(
            "cannot split {total} samples over {num_classes} classes"
        )));
    }
    let weights: Vec<f64> = (1..=num_classes)
        .map(|k| (k as f64).powf(-exponent))
        .collect();
    let sum: f64 = weights.iter().sum();
    let spare = (total - num_classes) as f64;
    let exact: Vec<f64> = weights.iter().map(|w| spare * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| 1 + e.floor() as usize).collect();
    let mut remaining = total - counts.iter().sum::<usize>();
    // largest remainder, earlier classes first on ties
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    Ok(counts)
}

impl SyntheticDataset {
    pub fn generate(config: &SyntheticConfig, phrases: &[RelationalPhrase]) -> Result<Self> {
        let c = config.num_classes;
        if phrases.len() != c {
            return Err(Error::Config(format!(
                "{c} classes but {} phrases",
                phrases.len()
            )));
        }
        if c > config.input_dim {
            return Err(Error::Config("more classes than input dimensions".into()));
        }
        if !(config.noise >= 0.0 && config.noise.is_finite()) {
            return Err(Error::Config(format!("noise {} invalid", config.noise)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let prototypes: Vec<Vec<f64>> = orthonormal_basis(c, config.input_dim, &mut rng)
            .into_iter()
            .map(|b| b.into_iter().map(|x| x * config.prototype_norm).collect())
            .collect();
        let class_counts = zipf_counts(c, config.train_size, config.zipf_exponent)?;
        let rare = class_counts
            .iter()
            .map(|&n| n < config.rare_threshold)
            .collect();

        let noise = Normal::new(0.0, config.noise).expect("valid noise");
        let sample = |class: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            prototypes[class]
                .iter()
                .map(|p| p + noise.sample(rng))
                .collect()
        };
        let mut train = Split::default();
        for (class, &n) in class_counts.iter().enumerate() {
            for _ in 0..n {
                train.inputs.push(sample(class, &mut rng));
                train.labels.push(class);
            }
        }
        let mut test = Split::default();
        for class in 0..c {
            for _ in 0..config.test_per_class {
                test.inputs.push(sample(class, &mut rng));
                test.labels.push(class);
            }
        }
        Ok(SyntheticDataset {
            config: config.clone(),
            prototypes,
            phrases: phrases.to_vec(),
            class_counts,
            rare,
            train,
            test,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.phrases.len()
    }

    pub fn rare_classes(&self) -> usize {
        self.rare.iter().filter(|&&r| r).count()
    }
}

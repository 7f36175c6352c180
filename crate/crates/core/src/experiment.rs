//! End-to-end toy experiment: vocabulary, neighborhoods, LUT, synthetic
//! data, head initialization and training.

use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{SyntheticConfig, SyntheticDataset};
use crate::error::{Error, Result};
use crate::fixture::{fixture_phrases, fixture_slot_words, fixture_store, random_store};
use crate::head::PhraseHead;
use crate::lut::{build_lut, LookUpTable};
use crate::neighborhood::{build_neighborhoods, NeighborhoodConfig, Neighborhoods};
use crate::phrase::ConcatEncoder;
use crate::store::{EmbeddingStore, Format};
use crate::trainer::{train, TargetSpace, TrainConfig, TrainingReport};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Targets from the (fixture or pretrained) word vectors.
    #[default]
    Word2vec,
    /// Same vocabulary and norms, random directions.
    Random,
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word2vec" | "structured" => Ok(TargetMode::Word2vec),
            "random" => Ok(TargetMode::Random),
            other => Err(Error::Config(format!("unknown target mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSource {
    pub path: PathBuf,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub data: SyntheticConfig,
    pub hidden: [usize; 2],
    pub target_mode: TargetMode,
    pub neighborhood: NeighborhoodConfig,
    /// Pretrained model; the bundled fixture vocabulary when absent.
    pub model: Option<ModelSource>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            data: SyntheticConfig::default(),
            hidden: [64, 64],
            target_mode: TargetMode::Word2vec,
            neighborhood: NeighborhoodConfig::default(),
            model: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let d = &mut self.data;
        match key {
            "optimizer" => t.optimizer = value.parse()?,
            "lr" | "learning_rate" => t.learning_rate = parse(key, value)?,
            "lr_schedule" => t.lr_schedule = value.parse()?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "alpha" => t.loss.alpha = parse(key, value)?,
            "beta" => t.loss.beta = parse(key, value)?,
            "margin" | "m" => t.loss.margin = parse(key, value)?,
            "distilling" | "loss" => t.loss.distilling = value.parse()?,
            "distance" => t.loss.distance = value.parse()?,
            "composition" => t.composition = parse_bool(key, value)?,
            "pv" | "p_v" => t.composition_config.p_v = parse(key, value)?,
            "po" | "p_o" => t.composition_config.p_o = parse(key, value)?,
            "weighting" => t.composition_config.weighting = value.parse()?,
            "hoi_surrogate" => t.hoi_surrogate = parse_bool(key, value)?,
            "target_mode" => self.target_mode = value.parse()?,
            "hidden" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| parse(key, p.trim()))
                    .collect::<Result<_>>()?;
                match parts.as_slice() {
                    [a, b] => self.hidden = [*a, *b],
                    _ => return Err(Error::Config("hidden expects two widths, e.g. 64,64".into())),
                }
            }
            "k" => self.neighborhood.k = parse(key, value)?,
            "tsim" | "t_sim" => self.neighborhood.t_sim = parse(key, value)?,
            "num_classes" => d.num_classes = parse(key, value)?,
            "input_dim" => d.input_dim = parse(key, value)?,
            "train_size" => d.train_size = parse(key, value)?,
            "test_per_class" => d.test_per_class = parse(key, value)?,
            "zipf" | "zipf_exponent" => d.zipf_exponent = parse(key, value)?,
            "noise" => d.noise = parse(key, value)?,
            "prototype_norm" => d.prototype_norm = parse(key, value)?,
            "rare_threshold" => d.rare_threshold = parse(key, value)?,
            "data_seed" => d.seed = parse(key, value)?,
            "model" => {
                let format = self.model.as_ref().map_or(Format::Bin, |m| m.format);
                self.model = Some(ModelSource {
                    path: value.into(),
                    format,
                });
            }
            "model_format" => {
                let format = value.parse()?;
                match &mut self.model {
                    Some(m) => m.format = format,
                    None => {
                        return Err(Error::Config("model_format given before model".into()));
                    }
                }
            }
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        NeighborhoodConfig::new(self.neighborhood.k, self.neighborhood.t_sim)?;
        if self.data.num_classes == 0 || self.data.num_classes > fixture_phrases().len() {
            return Err(Error::Config(format!(
                "num_classes must be in 1..={}",
                fixture_phrases().len()
            )));
        }
        Ok(())
    }
}

/// Everything built before training.
pub struct Prepared {
    pub store: EmbeddingStore,
    pub neighborhoods: Neighborhoods,
    pub lut: LookUpTable,
    pub dataset: SyntheticDataset,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let base = match &config.model {
        Some(m) => EmbeddingStore::load_path(&m.path, m.format)?,
        None => fixture_store()?,
    };
    let store = match config.target_mode {
        TargetMode::Word2vec => base,
        TargetMode::Random => random_store(&base, config.train.seed ^ 0x7a2d)?,
    };
    let phrases: Vec<_> = fixture_phrases()
        .into_iter()
        .take(config.data.num_classes)
        .collect();
    let neighborhoods = build_neighborhoods(&store, &fixture_slot_words(), config.neighborhood, None)?;
    let lut = build_lut(&ConcatEncoder::new(&store), &phrases)?;
    let dataset = SyntheticDataset::generate(&config.data, &phrases)?;
    Ok(Prepared {
        store,
        neighborhoods,
        lut,
        dataset,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub target_mode: TargetMode,
    pub hidden: [usize; 2],
    pub data: SyntheticConfig,
    pub neighborhood: NeighborhoodConfig,
    pub lut_entries: usize,
    pub training: TrainingReport,
}

pub fn init_head(config: &ExperimentConfig, output_dim: usize) -> Result<PhraseHead> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed.wrapping_add(0x4ead));
    PhraseHead::init(
        [config.data.input_dim, config.hidden[0], config.hidden[1], output_dim],
        &mut rng,
    )
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<(ExperimentReport, PhraseHead)> {
    let prepared = prepare(config)?;
    let mut head = init_head(config, prepared.lut.dimension())?;
    let mut targets = TargetSpace::new(
        &prepared.lut,
        ConcatEncoder::new(&prepared.store),
        Some(&prepared.neighborhoods),
    );
    let training = train(&prepared.dataset, &mut head, &mut targets, &config.train)?;
    Ok((
        ExperimentReport {
            target_mode: config.target_mode,
            hidden: config.hidden,
            data: config.data.clone(),
            neighborhood: config.neighborhood,
            lut_entries: prepared.lut.len(),
            training,
        },
        head,
    ))
}

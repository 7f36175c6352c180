//! The bundled end-to-end reproduction run behind `prk repro`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composition::{compose, support, CompositionConfig};
use crate::error::Result;
use crate::experiment::{run_experiment, ExperimentConfig, ExperimentReport, TargetMode};
use crate::fixture::{fixture_phrases, fixture_slot_words, fixture_store, FIXTURE_DIMENSION};
use crate::gradcheck::{run_gradcheck, GradcheckLoss, GradcheckReport};
use crate::lut::build_lut;
use crate::neighborhood::{build_neighborhoods, NeighborhoodConfig, NeighborhoodSet};
use crate::phrase::{triplet_to_phrase, ConcatEncoder};

pub const COMPOSITION_DRAWS: usize = 100_000;
pub const GRADCHECK_TRIALS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionSummary {
    pub phrase: String,
    pub support_size: usize,
    pub draws: usize,
    pub p_v: f64,
    pub p_o: f64,
    pub verb_replacement_rate: f64,
    pub object_replacement_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub lut_entries: usize,
    pub self_query_hits: usize,
    pub min_self_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproRuns {
    /// The pinned configuration: L1 distilling only, word2vec targets.
    pub distill_only: ExperimentReport,
    /// Pinned plus the triplet term, beta = 10, m = 0.5.
    pub triplet: ExperimentReport,
    /// Pinned plus label composition.
    pub composition: ExperimentReport,
    /// Pinned with random target directions.
    pub random_targets: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproSummary {
    pub top1: f64,
    pub top1_with_triplet: f64,
    pub min_centroid_distance_with_triplet: f64,
    pub min_centroid_distance_without_triplet: f64,
    pub rare_top1_composition_on: Option<f64>,
    pub rare_top1_composition_off: Option<f64>,
    pub top1_word2vec_targets: f64,
    pub top1_random_targets: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproReport {
    pub seed: u64,
    pub vocabulary: usize,
    pub dimension: usize,
    pub kiss_neighborhood: NeighborhoodSet,
    pub composition: CompositionSummary,
    pub gradcheck: Vec<GradcheckReport>,
    pub retrieval: RetrievalSummary,
    pub runs: ReproRuns,
    pub summary: ReproSummary,
}

/// The pinned toy configuration: L1 distilling only (no triplet term, no
/// composition), HOI surrogate on.
pub fn pinned_config(seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.train.seed = seed;
    config.data.seed = seed;
    config.train.hoi_surrogate = true;
    config.train.loss.beta = 0.0;
    config.train.composition = false;
    config
}

pub fn run_repro(seed: u64) -> Result<ReproReport> {
    let store = fixture_store()?;
    let neighborhoods = build_neighborhoods(
        &store,
        &fixture_slot_words(),
        NeighborhoodConfig { k: 10, t_sim: 0.7 },
        None,
    )?;
    let kiss = build_neighborhoods(&store, &["kiss"], NeighborhoodConfig { k: 10, t_sim: 0.7 }, None)?;
    let kiss_neighborhood = kiss.get("kiss").cloned().expect("queried");

    let phrase = triplet_to_phrase("human", "kiss", "horse")?;
    let comp_cfg = CompositionConfig {
        seed,
        ..CompositionConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut verbs, mut objects) = (0usize, 0usize);
    for _ in 0..COMPOSITION_DRAWS {
        let c = compose(&phrase, &neighborhoods, &comp_cfg, &mut rng);
        verbs += (c.verb != phrase.verb) as usize;
        objects += (c.object != phrase.object) as usize;
    }
    let composition = CompositionSummary {
        phrase: phrase.text(),
        support_size: support(&phrase, &neighborhoods).size,
        draws: COMPOSITION_DRAWS,
        p_v: comp_cfg.p_v,
        p_o: comp_cfg.p_o,
        verb_replacement_rate: verbs as f64 / COMPOSITION_DRAWS as f64,
        object_replacement_rate: objects as f64 / COMPOSITION_DRAWS as f64,
    };

    let gradcheck = GradcheckLoss::ALL
        .iter()
        .map(|&l| run_gradcheck(l, GRADCHECK_TRIALS, seed))
        .collect::<Result<Vec<_>>>()?;

    let lut = build_lut(&ConcatEncoder::new(&store), &fixture_phrases())?;
    let mut hits = 0usize;
    let mut min_sim = f64::INFINITY;
    for entry in lut.entries() {
        let r = lut.query(entry.embedding.values(), 1)?;
        hits += (r.phrase == entry.phrase) as usize;
        min_sim = min_sim.min(r.similarity);
    }
    let retrieval = RetrievalSummary {
        lut_entries: lut.len(),
        self_query_hits: hits,
        min_self_similarity: min_sim,
    };

    let base = pinned_config(seed);
    let (distill_only, _) = run_experiment(&base)?;
    let mut cfg = base.clone();
    cfg.train.loss.beta = 10.0;
    cfg.train.loss.margin = 0.5;
    let (triplet, _) = run_experiment(&cfg)?;
    let mut cfg = base.clone();
    cfg.train.composition = true;
    let (composition_run, _) = run_experiment(&cfg)?;
    let mut cfg = base.clone();
    cfg.target_mode = TargetMode::Random;
    let (random_targets, _) = run_experiment(&cfg)?;

    let m = &distill_only.training.metrics;
    let summary = ReproSummary {
        top1: m.top1,
        top1_with_triplet: triplet.training.metrics.top1,
        min_centroid_distance_with_triplet: triplet
            .training
            .embedding_stats
            .min_inter_class_centroid_distance,
        min_centroid_distance_without_triplet: distill_only
            .training
            .embedding_stats
            .min_inter_class_centroid_distance,
        rare_top1_composition_on: composition_run.training.metrics.rare_top1,
        rare_top1_composition_off: m.rare_top1,
        top1_word2vec_targets: m.top1,
        top1_random_targets: random_targets.training.metrics.top1,
    };

    Ok(ReproReport {
        seed,
        vocabulary: store.len(),
        dimension: FIXTURE_DIMENSION,
        kiss_neighborhood,
        composition,
        gradcheck,
        retrieval,
        runs: ReproRuns {
            distill_only,
            triplet,
            composition: composition_run,
            random_targets,
        },
        summary,
    })
}

//! Bundled fixture vocabulary.
//!
//! Every root word gets its own orthonormal direction. A derived word `w`
//! with anchor `a` and cosine `c` is `c * u(a) + sqrt(1 - c^2) * u(w)`, where
//! `u(w)` is a fresh orthonormal direction, so every pairwise cosine is a
//! product of the listed cosines and can be computed by hand. Vectors are
//! then scaled to per-word norms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::phrase::{triplet_to_phrase, RelationalPhrase};
use crate::store::{EmbeddingStore, WordVector};

pub const FIXTURE_DIMENSION: usize = 64;
const FIXTURE_SEED: u64 = 0x5eed_0f_f1c7;

/// `(word, anchor, cosine to anchor)`; roots have no anchor.
pub const FIXTURE_WORDS: &[(&str, Option<&str>, f64)] = &[
    ("human", None, 0.0),
    ("person", Some("human"), 0.76),
    // verbs
    ("kiss", None, 0.0),
    ("kisses", Some("kiss"), 0.81),
    ("smooch", Some("kiss"), 0.76),
    ("kissing", Some("kiss"), 0.71),
    ("hug", Some("kiss"), 0.55),
    ("ride", None, 0.0),
    ("riding", Some("ride"), 0.78),
    ("rides", Some("ride"), 0.74),
    ("hold", None, 0.0),
    ("holding", Some("hold"), 0.80),
    ("holds", Some("hold"), 0.73),
    ("eat", None, 0.0),
    ("eating", Some("eat"), 0.79),
    ("eats", Some("eat"), 0.72),
    ("feed", None, 0.0),
    ("feeding", Some("feed"), 0.77),
    ("watch", None, 0.0),
    ("watching", Some("watch"), 0.75),
    ("carry", None, 0.0),
    ("carrying", Some("carry"), 0.76),
    ("walk", None, 0.0),
    ("walking", Some("walk"), 0.74),
    ("pet", None, 0.0),
    ("petting", Some("pet"), 0.72),
    ("wash", None, 0.0),
    ("sit", None, 0.0),
    ("at", None, 0.0),
    // objects
    ("horse", None, 0.0),
    ("horses", Some("horse"), 0.85),
    ("racehorse", Some("horse"), 0.78),
    ("stallion", Some("horse"), 0.74),
    ("steed", Some("horse"), 0.72),
    ("giraffe", None, 0.0),
    ("giraffes", Some("giraffe"), 0.80),
    ("dog", None, 0.0),
    ("dogs", Some("dog"), 0.82),
    ("puppy", Some("dog"), 0.76),
    ("cat", None, 0.0),
    ("cats", Some("cat"), 0.81),
    ("kitten", Some("cat"), 0.75),
    ("bicycle", None, 0.0),
    ("bike", Some("bicycle"), 0.83),
    ("bicycles", Some("bicycle"), 0.77),
    ("apple", None, 0.0),
    ("apples", Some("apple"), 0.80),
    ("pizza", None, 0.0),
    ("pizzas", Some("pizza"), 0.79),
    ("umbrella", None, 0.0),
    ("cake", None, 0.0),
    ("cakes", Some("cake"), 0.78),
    ("elephant", None, 0.0),
    ("elephants", Some("elephant"), 0.81),
    ("dining", None, 0.0),
    ("table", None, 0.0),
];

/// The thirty `(verb, object)` classes of the toy experiments.
pub const FIXTURE_CLASSES: [(&str, &str); 30] = [
    ("ride", "horse"),
    ("feed", "horse"),
    ("kiss", "horse"),
    ("watch", "horse"),
    ("ride", "bicycle"),
    ("carry", "bicycle"),
    ("walk", "dog"),
    ("pet", "dog"),
    ("feed", "dog"),
    ("hold", "puppy"),
    ("pet", "cat"),
    ("feed", "cat"),
    ("hold", "cat"),
    ("ride", "elephant"),
    ("feed", "elephant"),
    ("watch", "giraffe"),
    ("feed", "giraffe"),
    ("eat", "apple"),
    ("hold", "apple"),
    ("eat", "pizza"),
    ("eat", "cake"),
    ("hold", "umbrella"),
    ("carry", "umbrella"),
    ("sit_at", "dining_table"),
    ("eat_at", "dining_table"),
    ("kiss", "dog"),
    ("wash", "dog"),
    ("wash", "horse"),
    ("hold", "pizza"),
    ("hold", "dog"),
];

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Gram-Schmidt over seeded Gaussian draws.
pub(crate) fn orthonormal_basis(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    assert!(count <= dim);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim);
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Unit direction of every fixture word, in `FIXTURE_WORDS` order.
pub fn fixture_directions() -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED);
    let basis = orthonormal_basis(FIXTURE_WORDS.len(), FIXTURE_DIMENSION, &mut rng);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(FIXTURE_WORDS.len());
    for (i, (_, anchor, cos)) in FIXTURE_WORDS.iter().enumerate() {
        let dir = match anchor {
            None => basis[i].clone(),
            Some(a) => {
                let ai = FIXTURE_WORDS
                    .iter()
                    .position(|(w, _, _)| w == a)
                    .expect("anchor listed before use");
                let s = (1.0 - cos * cos).sqrt();
                dirs[ai]
                    .iter()
                    .zip(&basis[i])
                    .map(|(x, y)| cos * x + s * y)
                    .collect()
            }
        };
        dirs.push(dir);
    }
    dirs
}

/// Per-word vector norms in `[0.7, 1.1)`.
fn fixture_norms() -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED ^ 0xa11);
    FIXTURE_WORDS
        .iter()
        .map(|_| rng.random_range(0.7..1.1))
        .collect()
}

pub fn fixture_store() -> Result<EmbeddingStore> {
    let dirs = fixture_directions();
    let norms = fixture_norms();
    EmbeddingStore::from_entries(
        FIXTURE_DIMENSION,
        FIXTURE_WORDS
            .iter()
            .zip(dirs.iter().zip(&norms))
            .map(|((w, _, _), (d, n))| WordVector {
                token: w.to_string(),
                vector: d.iter().map(|x| (x * n) as f32).collect(),
            }),
    )
}

/// Same vocabulary and norms as [`fixture_store`] but with directions drawn
/// at random, removing all semantic structure.
pub fn random_store(like: &EmbeddingStore, seed: u64) -> Result<EmbeddingStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = like.dimension();
    let mut out = EmbeddingStore::new(dim)?;
    for (token, v) in like.iter() {
        let n = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        let g = gaussian(&mut rng, dim);
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let vector: Vec<f32> = g.iter().map(|x| (x / gn * n) as f32).collect();
        out.push(token, &vector)?;
    }
    Ok(out)
}

pub fn fixture_phrases() -> Vec<RelationalPhrase> {
    FIXTURE_CLASSES
        .iter()
        .map(|(v, o)| triplet_to_phrase("human", v, o).expect("fixture phrase"))
        .collect()
}

/// Query words for neighborhood construction: every verb and object part
/// used by the fixture classes.
pub fn fixture_slot_words() -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for (v, o) in FIXTURE_CLASSES {
        for w in [v, o] {
            if !words.iter().any(|x| x == w) {
                words.push(w.to_string());
            }
        }
    }
    words
}

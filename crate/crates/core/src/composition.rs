//! Label composition: stochastic replacement of the verb and object slots of
//! a phrase by members of their semantic neighborhoods.

use std::str::FromStr;

use indexmap::IndexSet;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighborhood::{NeighborhoodSet, Neighborhoods};
use crate::phrase::RelationalPhrase;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Uniform,
    /// Draw probability proportional to similarity.
    Similarity,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "similarity" => Ok(Weighting::Similarity),
            other => Err(Error::Config(format!("unknown weighting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionConfig {
    pub p_v: f64,
    pub p_o: f64,
    pub weighting: Weighting,
    pub seed: u64,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        CompositionConfig {
            p_v: 0.8,
            p_o: 0.2,
            weighting: Weighting::Uniform,
            seed: 0,
        }
    }
}

impl CompositionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_v", self.p_v), ("p_o", self.p_o)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(
    original: &str,
    set: Option<&NeighborhoodSet>,
    p: f64,
    weighting: Weighting,
    rng: &mut R,
) -> Option<String> {
    // The Bernoulli draw is taken even for empty sets so the random stream
    // does not depend on neighborhood contents.
    let replace = rng.random::<f64>() < p;
    let set = set.filter(|s| !s.is_empty())?;
    if !replace {
        return None;
    }
    let idx = match weighting {
        Weighting::Uniform => rng.random_range(0..set.len()),
        Weighting::Similarity => {
            let weights = set.neighbors.iter().map(|n| n.similarity.max(0.0));
            match WeightedIndex::new(weights) {
                Ok(dist) => dist.sample(rng),
                Err(_) => rng.random_range(0..set.len()),
            }
        }
    };
    let token = &set.neighbors[idx].token;
    (token != original).then(|| token.clone())
}

/// Samples one composed phrase.
///
/// With probability `p_v` the verb is replaced by a draw from its
/// neighborhood, and independently with probability `p_o` the object. Slots
/// without a neighborhood entry are kept. The human slot never changes.
pub fn compose<R: Rng + ?Sized>(
    phrase: &RelationalPhrase,
    neighborhoods: &Neighborhoods,
    config: &CompositionConfig,
    rng: &mut R,
) -> RelationalPhrase {
    let verb = draw(
        &phrase.verb,
        neighborhoods.get(&phrase.verb),
        config.p_v,
        config.weighting,
        rng,
    );
    let object = draw(
        &phrase.object,
        neighborhoods.get(&phrase.object),
        config.p_o,
        config.weighting,
        rng,
    );
    RelationalPhrase {
        human: phrase.human.clone(),
        verb: verb.unwrap_or_else(|| phrase.verb.clone()),
        object: object.unwrap_or_else(|| phrase.object.clone()),
    }
}

/// Every phrase `compose` can emit for a given input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionSupport {
    pub phrase: RelationalPhrase,
    pub variants: Vec<RelationalPhrase>,
    pub size: usize,
}

impl CompositionSupport {
    pub fn contains(&self, phrase: &RelationalPhrase) -> bool {
        self.variants.contains(phrase)
    }
}

fn slot_options(original: &str, set: Option<&NeighborhoodSet>) -> IndexSet<String> {
    let mut options = IndexSet::new();
    options.insert(original.to_string());
    if let Some(set) = set {
        options.extend(set.tokens().map(str::to_string));
    }
    options
}

pub fn support(phrase: &RelationalPhrase, neighborhoods: &Neighborhoods) -> CompositionSupport {
    let verbs = slot_options(&phrase.verb, neighborhoods.get(&phrase.verb));
    let objects = slot_options(&phrase.object, neighborhoods.get(&phrase.object));
    let variants: Vec<RelationalPhrase> = verbs
        .iter()
        .flat_map(|v| {
            objects.iter().map(move |o| RelationalPhrase {
                human: phrase.human.clone(),
                verb: v.clone(),
                object: o.clone(),
            })
        })
        .collect();
    CompositionSupport {
        phrase: phrase.clone(),
        size: variants.len(),
        variants,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighborhood::Neighbor;
    use crate::phrase::triplet_to_phrase;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(query: &str, tokens: &[&str]) -> NeighborhoodSet {
        NeighborhoodSet {
            query: query.into(),
            neighbors: tokens
                .iter()
                .map(|t| Neighbor {
                    token: t.to_string(),
                    similarity: 0.8,
                })
                .collect(),
        }
    }

    fn kiss_horse() -> Neighborhoods {
        let mut n = Neighborhoods::new();
        n.insert(set("kiss", &["kisses", "smooch", "kissing"]));
        n.insert(set("horse", &["horses", "racehorse", "stallion", "steed"]));
        n
    }

    #[test]
    fn zero_probability_is_identity() {
        let p = triplet_to_phrase("human", "kiss", "horse").unwrap();
        let cfg = CompositionConfig {
            p_v: 0.0,
            p_o: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            assert_eq!(compose(&p, &kiss_horse(), &cfg, &mut rng), p);
        }
    }

    #[test]
    fn support_sizes() {
        let p = triplet_to_phrase("human", "kiss", "horse").unwrap();
        let s = support(&p, &kiss_horse());
        assert_eq!(s.size, 20);
        assert!(s.contains(&p));

        let lone = triplet_to_phrase("human", "ride", "bicycle").unwrap();
        let s = support(&lone, &kiss_horse());
        assert_eq!(s.size, 1);
        assert_eq!(s.variants, vec![lone]);

        let p = triplet_to_phrase("human", "kiss", "bicycle").unwrap();
        assert_eq!(support(&p, &kiss_horse()).size, 4);
    }

    #[test]
    fn certain_replacement_always_changes_both_slots() {
        let p = triplet_to_phrase("human", "kiss", "horse").unwrap();
        let cfg = CompositionConfig {
            p_v: 1.0,
            p_o: 1.0,
            weighting: Weighting::Similarity,
            seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let c = compose(&p, &kiss_horse(), &cfg, &mut rng);
            assert_ne!(c.verb, p.verb);
            assert_ne!(c.object, p.object);
        }
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let cfg = CompositionConfig {
            p_v: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(CompositionConfig::default().validate().is_ok());
    }
}

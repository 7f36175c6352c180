//! Close-set lookup table: maps a predicted phrase embedding to the most
//! similar ground-truth phrase by cosine similarity.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phrase::{
    read_phrase_vectors, write_phrase_vectors, PhraseEmbedding, PhraseEncoder, RelationalPhrase,
};
use crate::vecmath::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutEntry {
    pub phrase: RelationalPhrase,
    pub embedding: PhraseEmbedding,
}

#[derive(Debug, Clone)]
pub struct LookUpTable {
    dimension: usize,
    entries: Vec<LutEntry>,
    norms: Vec<f64>,
    texts: Vec<String>,
    index: HashMap<RelationalPhrase, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub phrase: RelationalPhrase,
    pub similarity: f64,
}

/// Best match plus the top-k ranking it heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub phrase: RelationalPhrase,
    /// `C_phrase`: cosine between the query and the returned entry.
    pub similarity: f64,
    pub ranking: Vec<Ranked>,
}

impl RetrievalResult {
    /// The HOI triplet `(human, verb, object)` of the best match, read from
    /// the stored phrase fields.
    pub fn hoi_instance(&self) -> (&str, &str, &str) {
        (&self.phrase.human, &self.phrase.verb, &self.phrase.object)
    }
}

impl LookUpTable {
    pub fn new(dimension: usize) -> Self {
        LookUpTable {
            dimension,
            entries: Vec::new(),
            norms: Vec::new(),
            texts: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_entries<I>(dimension: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (RelationalPhrase, PhraseEmbedding)>,
    {
        let mut lut = LookUpTable::new(dimension);
        for (phrase, embedding) in entries {
            lut.insert(phrase, embedding)?;
        }
        Ok(lut)
    }

    pub fn insert(&mut self, phrase: RelationalPhrase, embedding: PhraseEmbedding) -> Result<()> {
        if embedding.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: embedding.len(),
            });
        }
        if self.index.contains_key(&phrase) {
            return Err(Error::DuplicatePhrase(phrase.text()));
        }
        let n = norm(embedding.values());
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        self.index.insert(phrase.clone(), self.entries.len());
        self.norms.push(n);
        self.texts.push(phrase.text());
        self.entries.push(LutEntry { phrase, embedding });
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LutEntry] {
        &self.entries
    }

    pub fn position(&self, phrase: &RelationalPhrase) -> Option<usize> {
        self.index.get(phrase).copied()
    }

    pub fn embedding(&self, phrase: &RelationalPhrase) -> Option<&PhraseEmbedding> {
        self.position(phrase).map(|i| &self.entries[i].embedding)
    }

    /// Entry positions and similarities for the `k` best matches,
    /// descending; ties go to the lexicographically smaller phrase text.
    pub fn rank(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyTable);
        }
        if query.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (e, n))| (i, (dot(query, e.embedding.values()) / (qn * n)).clamp(-1.0, 1.0)))
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.texts[a.0].cmp(&self.texts[b.0]))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored)
    }

    pub fn query(&self, query: &[f64], k: usize) -> Result<RetrievalResult> {
        let ranked = self.rank(query, k)?;
        let ranking: Vec<Ranked> = ranked
            .iter()
            .map(|&(i, similarity)| Ranked {
                phrase: self.entries[i].phrase.clone(),
                similarity,
            })
            .collect();
        Ok(RetrievalResult {
            phrase: ranking[0].phrase.clone(),
            similarity: ranking[0].similarity,
            ranking,
        })
    }

    /// Writes the table as phrase-keyed vectors (word2vec binary layout).
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let entries: Vec<_> = self
            .entries
            .iter()
            .map(|e| (e.phrase.clone(), e.embedding.clone()))
            .collect();
        write_phrase_vectors(writer, &entries)
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let entries = read_phrase_vectors(reader)?;
        let dimension = entries.first().map_or(0, |(_, e)| e.len());
        LookUpTable::from_entries(dimension, entries)
    }
}

/// One entry per distinct annotated phrase, in first-occurrence order,
/// holding the clean encoding of that phrase.
pub fn build_lut<E: PhraseEncoder>(encoder: &E, annotations: &[RelationalPhrase]) -> Result<LookUpTable> {
    let mut lut = LookUpTable::new(encoder.output_dimension());
    for phrase in annotations {
        if lut.position(phrase).is_some() {
            continue;
        }
        let embedding = encoder.encode(phrase)?;
        lut.insert(phrase.clone(), embedding)?;
    }
    Ok(lut)
}

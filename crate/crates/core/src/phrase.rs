//! Relational phrases and their ground-truth phrase embeddings.
//!
//! A phrase is the `(human, verb, object)` label triple; its embedding is the
//! concatenation of the three slot vectors in human-verb-object order.

use std::fmt;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{EmbeddingStore, OovPolicy, WordVector};

/// Tokens accepted in the human slot.
pub const HUMAN_TOKENS: [&str; 2] = ["human", "person"];

const KEY_SEPARATOR: char = '|';

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationalPhrase {
    pub human: String,
    pub verb: String,
    pub object: String,
}

fn normalize_token(raw: &str) -> Result<String> {
    let parts: Vec<&str> = raw.split_whitespace().collect();
    if parts.is_empty() || raw.contains(KEY_SEPARATOR) {
        return Err(Error::InvalidToken(raw.to_string()));
    }
    Ok(parts.join("_").to_lowercase())
}

/// Builds a phrase from an HOI triplet.
///
/// Tokens are lowercased and any inner whitespace becomes `_`, so
/// `"sit at"` and `"sit_at"` name the same slot. Compound splitting is left
/// to embedding lookup.
pub fn triplet_to_phrase(human: &str, verb: &str, object: &str) -> Result<RelationalPhrase> {
    let human = normalize_token(human)?;
    if !HUMAN_TOKENS.contains(&human.as_str()) {
        return Err(Error::InvalidToken(human));
    }
    Ok(RelationalPhrase {
        human,
        verb: normalize_token(verb)?,
        object: normalize_token(object)?,
    })
}

impl RelationalPhrase {
    /// Canonical text: the three tokens joined by single spaces.
    pub fn text(&self) -> String {
        format!("{} {} {}", self.human, self.verb, self.object)
    }

    /// Parses canonical text back into a phrase. Exactly three tokens.
    pub fn parse(text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        match tokens.as_slice() {
            [h, v, o] => triplet_to_phrase(h, v, o),
            _ => Err(Error::Parse(format!(
                "expected three tokens in phrase {text:?}"
            ))),
        }
    }

    /// Whitespace-free key used in phrase-keyed vector files.
    pub fn key(&self) -> String {
        format!(
            "{}{KEY_SEPARATOR}{}{KEY_SEPARATOR}{}",
            self.human, self.verb, self.object
        )
    }

    pub fn from_key(key: &str) -> Result<Self> {
        let mut parts = key.split(KEY_SEPARATOR);
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(v), Some(o), None) => triplet_to_phrase(h, v, o),
            _ => Err(Error::Parse(format!("bad phrase key {key:?}"))),
        }
    }

    pub fn with_verb(&self, verb: &str) -> Self {
        RelationalPhrase {
            verb: verb.to_string(),
            ..self.clone()
        }
    }

    pub fn with_object(&self, object: &str) -> Self {
        RelationalPhrase {
            object: object.to_string(),
            ..self.clone()
        }
    }
}

impl fmt::Display for RelationalPhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.human, self.verb, self.object)
    }
}

/// A `3·D` vector: human, verb and object slices of width `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhraseEmbedding(Vec<f64>);

impl PhraseEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() % 3 != 0 {
            return Err(Error::DimensionMismatch {
                expected: 3 * (values.len() / 3).max(1),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("phrase embedding component {i}")));
        }
        Ok(PhraseEmbedding(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Width `D` of one slot.
    pub fn slot_width(&self) -> usize {
        self.0.len() / 3
    }

    pub fn human(&self) -> &[f64] {
        &self.0[..self.slot_width()]
    }

    pub fn verb(&self) -> &[f64] {
        let d = self.slot_width();
        &self.0[d..2 * d]
    }

    pub fn object(&self) -> &[f64] {
        let d = self.slot_width();
        &self.0[2 * d..]
    }
}

impl AsRef<[f64]> for PhraseEmbedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Maps phrases to ground-truth embeddings.
pub trait PhraseEncoder {
    fn output_dimension(&self) -> usize;
    fn encode(&self, phrase: &RelationalPhrase) -> Result<PhraseEmbedding>;
}

/// Concatenation encoder: `[v(human) | v(verb) | v(object)]`.
///
/// The human slot always encodes `human_token` so LUT entries stay
/// comparable across annotation spellings.
#[derive(Debug, Clone)]
pub struct ConcatEncoder<'a> {
    store: &'a EmbeddingStore,
    pub policy: OovPolicy,
    pub human_token: String,
}

impl<'a> ConcatEncoder<'a> {
    pub fn new(store: &'a EmbeddingStore) -> Self {
        ConcatEncoder {
            store,
            policy: OovPolicy::MeanOfParts,
            human_token: "human".to_string(),
        }
    }

    pub fn with_human_token(mut self, token: &str) -> Self {
        self.human_token = token.to_string();
        self
    }

    pub fn store(&self) -> &'a EmbeddingStore {
        self.store
    }

    /// Exact token first, then its lowercase form.
    pub fn resolve(&self, token: &str) -> Result<Vec<f64>> {
        match self.store.lookup(token, self.policy) {
            Err(Error::OutOfVocabulary(_)) if token.chars().any(char::is_uppercase) => {
                self.store.lookup(&token.to_lowercase(), self.policy)
            }
            other => other,
        }
    }
}

impl PhraseEncoder for ConcatEncoder<'_> {
    fn output_dimension(&self) -> usize {
        3 * self.store.dimension()
    }

    fn encode(&self, phrase: &RelationalPhrase) -> Result<PhraseEmbedding> {
        let mut values = Vec::with_capacity(self.output_dimension());
        values.extend(self.resolve(&self.human_token)?);
        values.extend(self.resolve(&phrase.verb)?);
        values.extend(self.resolve(&phrase.object)?);
        PhraseEmbedding::new(values)
    }
}

pub fn encode_phrase(store: &EmbeddingStore, phrase: &RelationalPhrase) -> Result<PhraseEmbedding> {
    ConcatEncoder::new(store).encode(phrase)
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct AnnotationRecord {
    pub human: String,
    pub verb: String,
    pub object: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnnotationItem {
    Record(AnnotationRecord),
    Image(Vec<AnnotationRecord>),
}

/// Reads HOI annotations: a JSON array whose items are either records
/// `{human, verb, object}` or per-image arrays of such records.
pub fn read_annotations<R: Read>(reader: R) -> Result<Vec<RelationalPhrase>> {
    let items: Vec<AnnotationItem> = serde_json::from_reader(reader)?;
    let mut phrases = Vec::new();
    for item in items {
        let records = match item {
            AnnotationItem::Record(r) => vec![r],
            AnnotationItem::Image(rs) => rs,
        };
        for r in records {
            phrases.push(triplet_to_phrase(&r.human, &r.verb, &r.object)?);
        }
    }
    Ok(phrases)
}

/// Writes phrase-keyed vectors in the word2vec binary layout; each entry's
/// token is the phrase key `human|verb|object`.
pub fn write_phrase_vectors<W: Write>(
    writer: W,
    entries: &[(RelationalPhrase, PhraseEmbedding)],
) -> Result<()> {
    let dimension = entries.first().map_or(3, |(_, e)| e.len());
    let store = EmbeddingStore::from_entries(
        dimension,
        entries.iter().map(|(p, e)| WordVector {
            token: p.key(),
            vector: e.values().iter().map(|&x| x as f32).collect(),
        }),
    )?;
    store.write_binary(writer)
}

pub fn read_phrase_vectors<R: BufRead>(reader: R) -> Result<Vec<(RelationalPhrase, PhraseEmbedding)>> {
    let store = EmbeddingStore::load_binary(reader)?;
    store
        .iter()
        .map(|(key, v)| {
            let phrase = RelationalPhrase::from_key(key)?;
            let embedding = PhraseEmbedding::new(v.iter().map(|&x| x as f64).collect())?;
            Ok((phrase, embedding))
        })
        .collect()
}

//! Pretrained word vectors: word2vec text and binary readers/writers, and
//! word lookup with the compound-word rule.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vocabulary token and its vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVector {
    pub token: String,
    pub vector: Vec<f32>,
}

/// On-disk layout of a word2vec model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    #[serde(alias = "binary")]
    Bin,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(Format::Text),
            "bin" | "binary" => Ok(Format::Bin),
            other => Err(Error::Config(format!("unknown embedding format {other:?}"))),
        }
    }
}

/// How `lookup` treats words missing from the vocabulary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Exact hits only.
    #[default]
    Error,
    /// Compound words fall back to the mean of their in-vocabulary parts;
    /// missing parts are dropped.
    Skip,
    /// Compound words fall back to the mean of their parts; every part must
    /// be in the vocabulary.
    MeanOfParts,
}

impl FromStr for OovPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(OovPolicy::Error),
            "skip" => Ok(OovPolicy::Skip),
            "mean" | "mean_of_parts" => Ok(OovPolicy::MeanOfParts),
            other => Err(Error::Config(format!("unknown oov policy {other:?}"))),
        }
    }
}

/// Immutable-after-load collection of word vectors of a single dimension.
///
/// Vectors are kept exactly as read (no re-normalization), in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    tokens: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

fn check_token(token: &str) -> Result<()> {
    if token.is_empty() || token.chars().any(char::is_whitespace) {
        return Err(Error::InvalidToken(token.to_string()));
    }
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut fields = line.split_whitespace();
    let parse = |f: Option<&str>| -> Result<usize> {
        f.ok_or_else(|| Error::Header(line.to_string()))?
            .parse::<usize>()
            .map_err(|_| Error::Header(line.to_string()))
    };
    let vocab = parse(fields.next())?;
    let dim = parse(fields.next())?;
    if fields.next().is_some() || dim == 0 {
        return Err(Error::Header(line.to_string()));
    }
    Ok((vocab, dim))
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        Ok(EmbeddingStore {
            dimension,
            tokens: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn from_entries<I>(dimension: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = WordVector>,
    {
        let mut store = EmbeddingStore::new(dimension)?;
        for entry in entries {
            store.push(entry.token, &entry.vector)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, token: impl Into<String>, vector: &[f32]) -> Result<()> {
        let token = token.into();
        check_token(&token)?;
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if let Some(index) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { token, index });
        }
        if self.index.contains_key(&token) {
            return Err(Error::DuplicateToken(token));
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn vector_at(&self, position: usize) -> &[f32] {
        &self.data[position * self.dimension..(position + 1) * self.dimension]
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.position(token).map(|i| self.vector_at(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> + '_ {
        self.tokens
            .iter()
            .zip(self.data.chunks_exact(self.dimension))
            .map(|(t, v)| (t.as_str(), v))
    }

    pub fn load_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Header("empty input".into()))??;
        let (vocab, dim) = parse_header(&header)?;
        let mut store = EmbeddingStore::new(dim)?;
        store.tokens.reserve(vocab);
        store.data.reserve(vocab * dim);

        let mut row = Vec::with_capacity(dim);
        for (n, line) in lines.enumerate() {
            let line = line?;
            let line_no = n + 2;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else {
                continue;
            };
            row.clear();
            for field in fields {
                let value = field
                    .parse::<f32>()
                    .map_err(|_| Error::Parse(format!("line {line_no}: bad number {field:?}")))?;
                row.push(value);
            }
            if row.len() != dim {
                return Err(Error::ComponentCount {
                    line: line_no,
                    expected: dim,
                    found: row.len(),
                });
            }
            store.push(token, &row)?;
        }
        if store.len() != vocab {
            return Err(Error::EntryCount {
                declared: vocab,
                found: store.len(),
            });
        }
        Ok(store)
    }

    /// Reads the binary layout: ASCII header `"<vocab> <dim>\n"`, then per
    /// entry the token bytes, one space, and `dim` little-endian `f32`s.
    ///
    /// Newlines between entries (as written by the reference word2vec tool)
    /// are tolerated.
    pub fn load_binary<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut header = Vec::new();
        reader.read_until(b'\n', &mut header)?;
        if header.last() != Some(&b'\n') {
            return Err(Error::Header("missing header line".into()));
        }
        let header = std::str::from_utf8(&header)
            .map_err(|_| Error::Header("header is not UTF-8".into()))?;
        let (vocab, dim) = parse_header(header.trim_end())?;
        let mut store = EmbeddingStore::new(dim)?;
        store.tokens.reserve(vocab);
        store.data.reserve(vocab * dim);

        let mut row = vec![0f32; dim];
        let mut token = Vec::new();
        for entry in 0..vocab {
            skip_newlines(&mut reader)?;
            token.clear();
            reader.read_until(b' ', &mut token)?;
            if token.pop() != Some(b' ') {
                return Err(Error::Truncated(format!("entry {entry}: token not terminated")));
            }
            let token = String::from_utf8(std::mem::take(&mut token))
                .map_err(|_| Error::Parse(format!("entry {entry}: token is not UTF-8")))?;
            reader
                .read_f32_into::<LittleEndian>(&mut row)
                .map_err(|e| match e.kind() {
                    std::io::ErrorKind::UnexpectedEof => {
                        Error::Truncated(format!("entry {entry} ({token:?}): vector cut short"))
                    }
                    _ => Error::Io(e),
                })?;
            store.push(token, &row)?;
        }

        let mut rest = Vec::new();
        reader.read_to_end(&mut rest)?;
        if rest.iter().any(|b| !b.is_ascii_whitespace()) {
            return Err(Error::EntryCount {
                declared: vocab,
                found: vocab + 1,
            });
        }
        Ok(store)
    }

    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{} {}", self.len(), self.dimension)?;
        for (token, vector) in self.iter() {
            writer.write_all(token.as_bytes())?;
            writer.write_all(b" ")?;
            for &v in vector {
                writer.write_f32::<LittleEndian>(v)?;
            }
        }
        writer.flush()?;
        Ok(())
    }

    pub fn write_text<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{} {}", self.len(), self.dimension)?;
        for (token, vector) in self.iter() {
            write!(writer, "{token}")?;
            for v in vector {
                write!(writer, " {v}")?;
            }
            writeln!(writer)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn load_path(path: impl AsRef<Path>, format: Format) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        match format {
            Format::Text => Self::load_text(reader),
            Format::Bin => Self::load_binary(reader),
        }
    }

    /// Resolves `word` to a vector.
    ///
    /// In-vocabulary words return the stored vector. Otherwise, unless the
    /// policy is [`OovPolicy::Error`], the word is split on spaces and
    /// underscores and the mean of the part vectors is returned.
    pub fn lookup(&self, word: &str, policy: OovPolicy) -> Result<Vec<f64>> {
        if word.is_empty() {
            return Err(Error::InvalidToken(String::new()));
        }
        if let Some(v) = self.get(word) {
            return Ok(v.iter().map(|&x| x as f64).collect());
        }
        if policy == OovPolicy::Error {
            return Err(Error::OutOfVocabulary(word.to_string()));
        }

        let mut sum = vec![0f64; self.dimension];
        let mut found = 0usize;
        for part in split_compound(word) {
            match self.get(part) {
                Some(v) => {
                    for (s, &x) in sum.iter_mut().zip(v) {
                        *s += x as f64;
                    }
                    found += 1;
                }
                None if policy == OovPolicy::MeanOfParts => {
                    return Err(Error::OutOfVocabulary(part.to_string()));
                }
                None => {}
            }
        }
        if found == 0 {
            return Err(Error::OutOfVocabulary(word.to_string()));
        }
        let inv = 1.0 / found as f64;
        sum.iter_mut().for_each(|s| *s *= inv);
        Ok(sum)
    }
}

fn skip_newlines<R: BufRead>(reader: &mut R) -> Result<()> {
    loop {
        let buf = reader.fill_buf()?;
        let n = buf.iter().take_while(|&&b| b == b'\n' || b == b'\r').count();
        let exhausted = n < buf.len() || buf.is_empty();
        reader.consume(n);
        if exhausted {
            return Ok(());
        }
    }
}

/// Parts of a compound word, split on spaces and underscores.
pub fn split_compound(word: &str) -> impl Iterator<Item = &str> {
    word.split([' ', '_']).filter(|p| !p.is_empty())
}

//! Semantic neighborhood sets: exact top-K cosine neighbors above a
//! similarity threshold.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{EmbeddingStore, OovPolicy};
use crate::vecmath::{dot, norm};

const FILE_HEADER: &str = "#prk-neighborhoods v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    pub k: usize,
    pub t_sim: f64,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        NeighborhoodConfig { k: 10, t_sim: 0.7 }
    }
}

impl NeighborhoodConfig {
    pub fn new(k: usize, t_sim: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&t_sim) {
            return Err(Error::Config(format!("t_sim {t_sim} outside [0, 1]")));
        }
        Ok(NeighborhoodConfig { k, t_sim })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub token: String,
    pub similarity: f64,
}

/// Neighbors of one query word, by similarity descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSet {
    pub query: String,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborhoodSet {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.neighbors.iter().map(|n| n.token.as_str())
    }
}

/// Query word → neighborhood set, in query order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Neighborhoods(IndexMap<String, NeighborhoodSet>);

impl Neighborhoods {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, set: NeighborhoodSet) {
        self.0.insert(set.query.clone(), set);
    }

    pub fn get(&self, word: &str) -> Option<&NeighborhoodSet> {
        self.0.get(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeighborhoodSet> + '_ {
        self.0.values()
    }

    /// Line format: `query<TAB>neighbor:sim,neighbor:sim,...` after a
    /// single header line. Similarities carry 17 significant digits.
    pub fn save<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{FILE_HEADER}")?;
        for set in self.iter() {
            check_field(&set.query, &['\t', '\n', '\r'])?;
            write!(writer, "{}\t", set.query)?;
            for (i, n) in set.neighbors.iter().enumerate() {
                check_field(&n.token, &['\t', '\n', '\r', ','])?;
                if i > 0 {
                    write!(writer, ",")?;
                }
                write!(writer, "{}:{:.16e}", n.token, n.similarity)?;
            }
            writeln!(writer)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim_end() == FILE_HEADER => {}
            Some(Err(e)) => return Err(e.into()),
            _ => return Err(Error::Header("missing neighborhood file header".into())),
        }
        let mut map = Neighborhoods::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", n + 2));
            let (query, rest) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let mut neighbors = Vec::new();
            for item in rest.split(',').filter(|s| !s.is_empty()) {
                let (token, sim) = item.rsplit_once(':').ok_or_else(|| bad("missing ':'"))?;
                let similarity = sim.parse::<f64>().map_err(|_| bad("bad similarity"))?;
                neighbors.push(Neighbor {
                    token: token.to_string(),
                    similarity,
                });
            }
            map.insert(NeighborhoodSet {
                query: query.to_string(),
                neighbors,
            });
        }
        Ok(map)
    }
}

fn check_field(s: &str, forbidden: &[char]) -> Result<()> {
    if s.is_empty() || s.contains(forbidden) {
        return Err(Error::InvalidToken(s.to_string()));
    }
    Ok(())
}

fn by_similarity_then_token(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.token.cmp(&b.token))
}

/// Builds neighborhood sets by brute-force cosine search.
///
/// The candidate pool is the whole store vocabulary unless `pool` is given.
/// A candidate is kept when its similarity is strictly above `t_sim` and it
/// is not the query token itself; at most `k` survive, ties broken by token.
pub fn build_neighborhoods<S: AsRef<str>>(
    store: &EmbeddingStore,
    queries: &[S],
    config: NeighborhoodConfig,
    pool: Option<&[String]>,
) -> Result<Neighborhoods> {
    let positions: Vec<usize> = match pool {
        Some(words) => words
            .iter()
            .map(|w| {
                store
                    .position(w)
                    .ok_or_else(|| Error::OutOfVocabulary(w.clone()))
            })
            .collect::<Result<_>>()?,
        None => (0..store.len()).collect(),
    };
    let candidates: Vec<(usize, Vec<f64>, f64)> = positions
        .into_iter()
        .map(|i| {
            let v: Vec<f64> = store.vector_at(i).iter().map(|&x| x as f64).collect();
            let n = norm(&v);
            (i, v, n)
        })
        .filter(|(_, _, n)| *n > 0.0)
        .collect();

    let mut out = Neighborhoods::new();
    for query in queries {
        let query = query.as_ref();
        let q = store.lookup(query, OovPolicy::MeanOfParts)?;
        let qn = norm(&q);
        if qn == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let mut hits: Vec<Neighbor> = candidates
            .iter()
            .filter(|(i, _, _)| store.tokens()[*i] != query)
            .filter_map(|(i, v, n)| {
                let similarity = (dot(&q, v) / (qn * n)).clamp(-1.0, 1.0);
                (similarity > config.t_sim).then(|| Neighbor {
                    token: store.tokens()[*i].clone(),
                    similarity,
                })
            })
            .collect();
        hits.sort_by(by_similarity_then_token);
        hits.truncate(config.k);
        out.insert(NeighborhoodSet {
            query: query.to_string(),
            neighbors: hits,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> EmbeddingStore {
        let text = "4 2\nq 1 0\na 0.9 0.436\nb 0 1\nc 0.9 0.436\n";
        EmbeddingStore::load_text(text.as_bytes()).unwrap()
    }

    #[test]
    fn hand_computed_fixture() {
        let s = EmbeddingStore::load_text("3 2\nq 1 0\na 0.9 0.436\nb 0 1\n".as_bytes()).unwrap();
        let n = build_neighborhoods(&s, &["q"], NeighborhoodConfig::new(10, 0.7).unwrap(), None)
            .unwrap();
        let set = n.get("q").unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.neighbors[0].token, "a");
        let (a0, a1) = (0.9f32 as f64, 0.436f32 as f64);
        let expected = a0 / (a0 * a0 + a1 * a1).sqrt();
        assert!((set.neighbors[0].similarity - expected).abs() < 1e-12);
        assert!((set.neighbors[0].similarity - 0.9).abs() < 1e-3);
    }

    #[test]
    fn ties_break_lexicographically_and_k_truncates() {
        let s = store();
        let n = build_neighborhoods(&s, &["q"], NeighborhoodConfig::new(1, 0.5).unwrap(), None)
            .unwrap();
        assert_eq!(n.get("q").unwrap().tokens().collect::<Vec<_>>(), ["a"]);
    }

    #[test]
    fn threshold_one_is_empty() {
        let s = store();
        let n = build_neighborhoods(&s, &["q", "a", "b"], NeighborhoodConfig::new(10, 1.0).unwrap(), None)
            .unwrap();
        assert!(n.iter().all(NeighborhoodSet::is_empty));
    }

    #[test]
    fn restricted_pool_and_errors() {
        let s = store();
        let pool = vec!["b".to_string(), "c".to_string()];
        let n = build_neighborhoods(&s, &["q"], NeighborhoodConfig::new(10, 0.0).unwrap(), Some(&pool))
            .unwrap();
        assert_eq!(n.get("q").unwrap().tokens().collect::<Vec<_>>(), ["c"]);
        assert!(build_neighborhoods(&s, &["zz"], NeighborhoodConfig::default(), None).is_err());
        assert!(NeighborhoodConfig::new(0, 0.5).is_err());
        assert!(NeighborhoodConfig::new(3, 1.5).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let s = store();
        let n = build_neighborhoods(&s, &["q", "b"], NeighborhoodConfig::new(10, 0.0).unwrap(), None)
            .unwrap();
        let mut buf = Vec::new();
        n.save(&mut buf).unwrap();
        let back = Neighborhoods::load(buf.as_slice()).unwrap();
        assert_eq!(back, n);

        let mut empty = Vec::new();
        Neighborhoods::new().save(&mut empty).unwrap();
        assert_eq!(String::from_utf8(empty.clone()).unwrap(), format!("{FILE_HEADER}\n"));
        assert!(Neighborhoods::load(empty.as_slice()).unwrap().is_empty());
        assert!(Neighborhoods::load("q\ta:0.5\n".as_bytes()).is_err());
        assert!(Neighborhoods::load(format!("{FILE_HEADER}\nq\ta:x\n").as_bytes()).is_err());
    }
}

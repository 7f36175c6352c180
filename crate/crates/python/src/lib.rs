//! Python bindings for `prk_core`.

use std::fs::File;
use std::io::BufReader;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prk_core::experiment::{run_experiment, ExperimentConfig};
use prk_core::gradcheck::{run_gradcheck, GradcheckLoss};
use prk_core::repro::run_repro;
use prk_core::{
    self as core, CompositionConfig, ConcatEncoder, Distance, Distilling, LabeledBatch, LossConfig,
    NeighborhoodConfig, OovPolicy, PhraseEncoder,
};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(err)
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(err)
}

#[pyclass(module = "prk", frozen, eq, hash, from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct Phrase(core::RelationalPhrase);

#[pymethods]
impl Phrase {
    #[new]
    fn new(human: &str, verb: &str, object: &str) -> PyResult<Self> {
        core::triplet_to_phrase(human, verb, object).map(Phrase).map_err(err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        core::RelationalPhrase::parse(text).map(Phrase).map_err(err)
    }

    #[getter]
    fn human(&self) -> &str {
        &self.0.human
    }

    #[getter]
    fn verb(&self) -> &str {
        &self.0.verb
    }

    #[getter]
    fn object(&self) -> &str {
        &self.0.object
    }

    fn text(&self) -> String {
        self.0.text()
    }

    fn __str__(&self) -> String {
        self.0.text()
    }

    fn __repr__(&self) -> String {
        format!("Phrase({:?}, {:?}, {:?})", self.0.human, self.0.verb, self.0.object)
    }
}

#[pyclass(module = "prk", frozen)]
struct EmbeddingStore(core::EmbeddingStore);

#[pymethods]
impl EmbeddingStore {
    /// Loads a word2vec model; `format` is `"bin"` or `"text"`.
    #[staticmethod]
    #[pyo3(signature = (path, format = "bin"))]
    fn load(path: &str, format: &str) -> PyResult<Self> {
        core::EmbeddingStore::load_path(path, parse(format)?).map(EmbeddingStore).map_err(err)
    }

    /// The bundled 64-dimensional test vocabulary.
    #[staticmethod]
    fn fixture() -> PyResult<Self> {
        core::fixture::fixture_store().map(EmbeddingStore).map_err(err)
    }

    #[staticmethod]
    fn from_dict(dimension: usize, vectors: Vec<(String, Vec<f32>)>) -> PyResult<Self> {
        let mut store = core::EmbeddingStore::new(dimension).map_err(err)?;
        for (token, v) in vectors {
            store.push(token, &v).map_err(err)?;
        }
        Ok(EmbeddingStore(store))
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __contains__(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    fn tokens(&self) -> Vec<String> {
        self.0.tokens().to_vec()
    }

    #[pyo3(signature = (word, oov = "error"))]
    fn lookup(&self, word: &str, oov: &str) -> PyResult<Vec<f64>> {
        let policy: OovPolicy = parse(oov)?;
        self.0.lookup(word, policy).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(err)?;
        self.0.write_binary(std::io::BufWriter::new(file)).map_err(err)
    }

    fn encode(&self, phrase: &Phrase) -> PyResult<Vec<f64>> {
        ConcatEncoder::new(&self.0)
            .encode(&phrase.0)
            .map(|e| e.into_inner())
            .map_err(err)
    }

    #[pyo3(signature = (words, k = 10, t_sim = 0.7))]
    fn neighborhoods(&self, words: Vec<String>, k: usize, t_sim: f64) -> PyResult<Neighborhoods> {
        let cfg = NeighborhoodConfig::new(k, t_sim).map_err(err)?;
        core::build_neighborhoods(&self.0, &words, cfg, None).map(Neighborhoods).map_err(err)
    }

    fn build_lut(&self, phrases: Vec<Phrase>) -> PyResult<LookUpTable> {
        let phrases: Vec<_> = phrases.into_iter().map(|p| p.0).collect();
        core::build_lut(&ConcatEncoder::new(&self.0), &phrases).map(LookUpTable).map_err(err)
    }
}

#[pyclass(module = "prk", frozen)]
struct Neighborhoods(core::Neighborhoods);

#[pymethods]
impl Neighborhoods {
    /// `(token, similarity)` pairs by similarity descending.
    fn get(&self, word: &str) -> PyResult<Vec<(String, f64)>> {
        let set = self.0.get(word).ok_or_else(|| PyKeyError::new_err(word.to_string()))?;
        Ok(set.neighbors.iter().map(|n| (n.token.clone(), n.similarity)).collect())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(err)?;
        self.0.save(std::io::BufWriter::new(file)).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(err)?;
        core::Neighborhoods::load(BufReader::new(file)).map(Neighborhoods).map_err(err)
    }

    fn support(&self, phrase: &Phrase) -> Vec<Phrase> {
        core::support(&phrase.0, &self.0).variants.into_iter().map(Phrase).collect()
    }

    /// `n` composed labels from a seeded generator.
    #[pyo3(signature = (phrase, n = 1, p_v = 0.8, p_o = 0.2, seed = 0, weighting = "uniform"))]
    fn compose(
        &self,
        phrase: &Phrase,
        n: usize,
        p_v: f64,
        p_o: f64,
        seed: u64,
        weighting: &str,
    ) -> PyResult<Vec<Phrase>> {
        let cfg = CompositionConfig {
            p_v,
            p_o,
            weighting: parse(weighting)?,
            seed,
        };
        cfg.validate().map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| Phrase(core::compose(&phrase.0, &self.0, &cfg, &mut rng))).collect())
    }
}

#[pyclass(module = "prk", frozen)]
struct LookUpTable(core::LookUpTable);

#[pymethods]
impl LookUpTable {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(err)?;
        core::LookUpTable::load(BufReader::new(file)).map(LookUpTable).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(err)?;
        self.0.save(std::io::BufWriter::new(file)).map_err(err)
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Top-`k` `(phrase, similarity)` pairs for `query`.
    #[pyo3(signature = (query, k = 1))]
    fn query(&self, query: Vec<f64>, k: usize) -> PyResult<Vec<(Phrase, f64)>> {
        let r = self.0.query(&query, k).map_err(err)?;
        Ok(r.ranking.into_iter().map(|x| (Phrase(x.phrase), x.similarity)).collect())
    }
}

#[pyfunction]
#[pyo3(signature = (pred, target, variant = "l1"))]
fn distilling_loss(pred: Vec<f64>, target: Vec<f64>, variant: &str) -> PyResult<(f64, Vec<f64>)> {
    let variant: Distilling = parse(variant)?;
    core::distilling_loss(&pred, &target, variant).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (predictions, class_ids, margin = 0.5, distance = "euclidean"))]
fn triplet_loss(predictions: Vec<Vec<f64>>, class_ids: Vec<usize>, margin: f64, distance: &str) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let metric: Distance = parse(distance)?;
    let out = core::triplet_loss(&predictions, &class_ids, margin, metric).map_err(err)?;
    Ok((out.value, out.gradients))
}

#[pyfunction]
#[pyo3(signature = (predictions, targets, class_ids, beta = 10.0, margin = 0.5, distilling = "l1", distance = "euclidean"))]
fn phrase_loss(
    predictions: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    class_ids: Vec<usize>,
    beta: f64,
    margin: f64,
    distilling: &str,
    distance: &str,
) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let config = LossConfig {
        beta,
        margin,
        distilling: parse(distilling)?,
        distance: parse(distance)?,
        ..LossConfig::default()
    };
    config.validate().map_err(err)?;
    let batch = LabeledBatch::new(predictions, targets, class_ids).map_err(err)?;
    let out = core::phrase_loss(&batch, &config).map_err(err)?;
    Ok((out.value, out.gradients))
}

#[pyfunction]
#[pyo3(signature = (hoi_loss, phrase_loss, alpha = 0.1))]
fn total_loss(hoi_loss: f64, phrase_loss: f64, alpha: f64) -> PyResult<f64> {
    core::total_loss(hoi_loss, phrase_loss, alpha).map_err(err)
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    core::cosine_similarity(&a, &b).map_err(err)
}

/// Finite-difference check of one loss; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (loss = "phrase", trials = 20, seed = 1))]
fn gradcheck(py: Python<'_>, loss: &str, trials: usize, seed: u64) -> PyResult<String> {
    let loss: GradcheckLoss = parse(loss)?;
    let report = py.detach(|| run_gradcheck(loss, trials, seed)).map_err(err)?;
    to_json(&report)
}

/// Trains on the synthetic dataset. `overrides` are `key=value` settings as
/// accepted by `prk train --set`; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (overrides = Vec::new()))]
fn train(py: Python<'_>, overrides: Vec<String>) -> PyResult<String> {
    let mut config = ExperimentConfig::default();
    for o in &overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| err(format!("expected KEY=VALUE, got {o:?}")))?;
        config.set(k.trim(), v.trim()).map_err(err)?;
    }
    config.validate().map_err(err)?;
    let (report, _) = py.detach(|| run_experiment(&config)).map_err(err)?;
    to_json(&report)
}

/// The pinned reproduction run; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (seed = 7))]
fn repro(py: Python<'_>, seed: u64) -> PyResult<String> {
    let report = py.detach(|| run_repro(seed)).map_err(err)?;
    to_json(&report)
}

#[pymodule]
fn prk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Phrase>()?;
    m.add_class::<EmbeddingStore>()?;
    m.add_class::<Neighborhoods>()?;
    m.add_class::<LookUpTable>()?;
    m.add_function(wrap_pyfunction!(distilling_loss, m)?)?;
    m.add_function(wrap_pyfunction!(triplet_loss, m)?)?;
    m.add_function(wrap_pyfunction!(phrase_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(repro, m)?)?;
    Ok(())
}

//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! `PRK_W2V_MODEL=/path/to/GoogleNews-vectors-negative300.bin` enables the
//! pretrained-model check of criterion 2; without it the fixture
//! vocabulary stands in. `PRK_BLESS=1` rewrites the golden repro report.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use prk_core::fixture::{fixture_phrases, fixture_slot_words, fixture_store};
use prk_core::gradcheck::{run_gradcheck, GradcheckLoss};
use prk_core::losses::triplet_loss;
use prk_core::repro::ReproReport;
use prk_core::{
    build_lut, build_neighborhoods, compose, distilling_loss, phrase_loss, support, total_loss,
    triplet_to_phrase, CompositionConfig, ConcatEncoder, Distilling, EmbeddingStore, Format,
    LabeledBatch, LookUpTable, LossConfig, NeighborhoodConfig, PhraseEmbedding, WordVector,
};

// Tolerances and budgets.
const FORMAT_BUDGET: Duration = Duration::from_secs(1);
const MAX_ULP: u32 = 1;
const PRETRAINED_TOLERANCE: f64 = 0.02;
const FIXTURE_TOLERANCE: f64 = 1e-6;
const DRAWS: usize = 100_000;
const RATE_TOLERANCE: f64 = 0.01;
const CHI_ALPHA: f64 = 0.01;
const GRAD_TOLERANCE: f64 = 1e-5;
const GRAD_TRIALS: usize = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(10);
const SELF_QUERY_TOLERANCE: f64 = 1e-9;
const TOP1_THRESHOLD: f64 = 0.95;
const TRAIN_BUDGET: Duration = Duration::from_secs(300);
const REPRO_SEED: u64 = 7;

// Rare-class top-1 of the pinned seed-7 runs (oracle run, see README).
const PINNED_RARE_TOP1_COMPOSITION_ON: f64 = 0.9875;
const PINNED_RARE_TOP1_COMPOSITION_OFF: f64 = 0.975;
const PIN_TOLERANCE: f64 = 1e-9;

struct Gate {
    failures: usize,
}

impl Gate {
    fn report(&mut self, id: &str, name: &str, result: Result<String, String>) {
        match result {
            Ok(detail) => println!("[PASS] {id} {name}: {detail}"),
            Err(detail) => {
                self.failures += 1;
                println!("[FAIL] {id} {name}: {detail}");
            }
        }
    }
}

fn check(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ulp_distance(a: f32, b: f32) -> u32 {
    if a == b {
        return 0;
    }
    let key = |x: f32| {
        let bits = x.to_bits() as i64;
        if bits < 0x8000_0000 {
            bits
        } else {
            0x8000_0000 - bits
        }
    };
    (key(a) - key(b)).unsigned_abs() as u32
}

fn format_fidelity() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dim = 50;
    let entries: Vec<WordVector> = (0..1000)
        .map(|i| WordVector {
            token: format!("w{i:04}_{}", rng.random_range(0..1000)),
            vector: (0..dim)
                .map(|_| {
                    let x: f64 = rng.sample(StandardNormal);
                    (x * 10f64.powi(rng.random_range(-4..4))) as f32
                })
                .collect(),
        })
        .collect();
    let store = EmbeddingStore::from_entries(dim, entries).map_err(|e| e.to_string())?;

    let mut bin = Vec::new();
    store.write_binary(&mut bin).map_err(|e| e.to_string())?;
    let back = EmbeddingStore::load_binary(bin.as_slice()).map_err(|e| e.to_string())?;
    let bit_exact = back.tokens() == store.tokens()
        && store
            .iter()
            .zip(back.iter())
            .all(|(a, b)| a.1.iter().zip(b.1).all(|(x, y)| x.to_bits() == y.to_bits()));

    // Nine significant digits, re-parsed independently as decimals.
    let mut text = format!("{} {}\n", store.len(), dim);
    for (t, v) in store.iter() {
        text.push_str(t);
        for x in v {
            text.push_str(&format!(" {x:.8e}"));
        }
        text.push('\n');
    }
    let parsed = EmbeddingStore::load_text(text.as_bytes()).map_err(|e| e.to_string())?;
    let mut worst = 0u32;
    for line in text.lines().skip(1) {
        let mut parts = line.split(' ');
        let token = parts.next().unwrap();
        let got = parsed.get(token).ok_or(format!("{token} missing"))?;
        for (x, s) in got.iter().zip(parts) {
            let oracle = s.parse::<f64>().map_err(|e| e.to_string())? as f32;
            worst = worst.max(ulp_distance(*x, oracle));
        }
    }
    let elapsed = start.elapsed();
    check(
        bit_exact && worst <= MAX_ULP && elapsed < FORMAT_BUDGET,
        format!(
            "1000 words x {dim}: binary bit-exact {bit_exact}, text max {worst} ULP, {:.3} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn kiss_neighborhood(store: &EmbeddingStore, want: &[(&str, f64)], tolerance: f64) -> Result<String, String> {
    let n = build_neighborhoods(store, &["kiss"], NeighborhoodConfig::new(10, 0.7).unwrap(), None)
        .map_err(|e| e.to_string())?;
    let set = n.get("kiss").unwrap();
    let found: BTreeMap<&str, f64> = set.neighbors.iter().map(|x| (x.token.as_str(), x.similarity)).collect();
    let mut detail = Vec::new();
    let mut ok = true;
    for (w, s) in want {
        match found.get(w) {
            Some(got) => {
                ok &= (got - s).abs() <= tolerance;
                detail.push(format!("{w} {got:.4}"));
            }
            None => {
                ok = false;
                detail.push(format!("{w} missing"));
            }
        }
    }
    check(ok, detail.join(", "))
}

fn worked_example() -> Result<String, String> {
    let want = [("kisses", 0.81), ("smooch", 0.76), ("kissing", 0.71)];
    match std::env::var_os("PRK_W2V_MODEL") {
        Some(path) => {
            let store = EmbeddingStore::load_path(Path::new(&path), Format::Bin).map_err(|e| e.to_string())?;
            kiss_neighborhood(&store, &want, PRETRAINED_TOLERANCE).map(|d| format!("pretrained model: {d}"))
        }
        None => {
            let store = fixture_store().map_err(|e| e.to_string())?;
            kiss_neighborhood(&store, &want, FIXTURE_TOLERANCE)
                .map(|d| format!("model absent, fixture vocabulary: {d}"))
        }
    }
}

fn composition_support() -> Result<String, String> {
    let store = fixture_store().map_err(|e| e.to_string())?;
    let n = build_neighborhoods(&store, &fixture_slot_words(), NeighborhoodConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let phrase = triplet_to_phrase("human", "kiss", "horse").unwrap();
    let kiss: Vec<&str> = n.get("kiss").unwrap().tokens().collect();
    let horse: Vec<&str> = n.get("horse").unwrap().tokens().collect();
    let s = support(&phrase, &n);
    let mut brute = BTreeSet::new();
    for v in std::iter::once("kiss").chain(kiss.iter().copied()) {
        for o in std::iter::once("horse").chain(horse.iter().copied()) {
            brute.insert(format!("human {v} {o}"));
        }
    }
    let enumerated: BTreeSet<String> = s.variants.iter().map(|p| p.text()).collect();

    let cfg = CompositionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(REPRO_SEED);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut replaced = 0usize;
    for _ in 0..DRAWS {
        let c = compose(&phrase, &n, &cfg, &mut rng);
        if c.verb != phrase.verb {
            replaced += 1;
            *counts.entry(c.verb).or_default() += 1;
        }
    }
    let rate = replaced as f64 / DRAWS as f64;
    let expected = replaced as f64 / kiss.len() as f64;
    let stat: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((kiss.len() - 1) as f64).unwrap().cdf(stat);
    check(
        kiss.len() == 3
            && horse.len() == 4
            && s.size == 20
            && enumerated == brute
            && counts.len() == 3
            && (rate - cfg.p_v).abs() <= RATE_TOLERANCE
            && p > CHI_ALPHA,
        format!(
            "|Nv|={} |No|={} support {} (brute force equal: {}), verb rate {rate:.4}, chi-square p {p:.3}",
            kiss.len(),
            horse.len(),
            s.size,
            enumerated == brute
        ),
    )
}

fn gradient_correctness() -> Result<String, String> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut near = 0;
    let mut all = true;
    for loss in GradcheckLoss::ALL {
        let r = run_gradcheck(loss, GRAD_TRIALS, 1).map_err(|e| e.to_string())?;
        all &= r.max_rel_error <= GRAD_TOLERANCE && r.trials == GRAD_TRIALS;
        worst = worst.max(r.max_rel_error);
        if matches!(loss, GradcheckLoss::Triplet | GradcheckLoss::Phrase) {
            near += r.near_hinge_trials;
        }
    }
    let elapsed = start.elapsed();
    check(
        all && near > 0 && elapsed < GRAD_BUDGET,
        format!(
            "6 losses x {GRAD_TRIALS} trials, max rel. error {worst:.2e}, {near} near-hinge trials, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn loss_algebra() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rows = |n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..30).map(|_| rng.sample(StandardNormal)).collect()).collect()
    };
    let preds = rows(8);
    let targets = rows(8);
    let classes = vec![0, 1, 2, 3, 0, 1, 2, 3];
    let batch = LabeledBatch::new(preds.clone(), targets.clone(), classes.clone()).map_err(|e| e.to_string())?;
    let defaults = LossConfig::default();
    let no_triplet = LossConfig { beta: 0.0, ..defaults };
    let v0 = phrase_loss(&batch, &no_triplet).map_err(|e| e.to_string())?.value;
    let mean = preds
        .iter()
        .zip(&targets)
        .map(|(p, t)| distilling_loss(p, t, Distilling::L1).unwrap().0)
        .sum::<f64>()
        / preds.len() as f64;
    let full = phrase_loss(&batch, &defaults).map_err(|e| e.to_string())?;
    let t = triplet_loss(&preds, &classes, 0.5, defaults.distance).map_err(|e| e.to_string())?;
    let hoi = 1.2345;
    let total = total_loss(hoi, full.value, defaults.alpha).map_err(|e| e.to_string())?;
    let documented_defaults = defaults.alpha == 0.1 && defaults.beta == 10.0 && defaults.margin == 0.5;
    check(
        v0 == mean && full.value == mean + 10.0 * t.value && total == hoi + 0.1 * full.value && documented_defaults,
        format!(
            "beta=0 phrase {v0} == mean distilling {mean}; total {total} == hoi + 0.1*phrase; defaults alpha {} beta {} m {}",
            defaults.alpha, defaults.beta, defaults.margin
        ),
    )
}

fn retrieval() -> Result<String, String> {
    let store = fixture_store().map_err(|e| e.to_string())?;
    let lut = build_lut(&ConcatEncoder::new(&store), &fixture_phrases()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut self_hits = 0;
    for e in lut.entries() {
        let r = lut.query(e.embedding.values(), 1).map_err(|e| e.to_string())?;
        self_hits += (r.phrase == e.phrase) as usize;
        worst = worst.max((r.similarity - 1.0).abs());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let dim = 24;
    let big = LookUpTable::from_entries(
        dim,
        (0..100).map(|i| {
            let p = triplet_to_phrase("human", &format!("verb{}", i % 9), &format!("object{i}")).unwrap();
            let v = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            (p, PhraseEmbedding::new(v).unwrap())
        }),
    )
    .map_err(|e| e.to_string())?;
    let mut rankings_equal = true;
    for _ in 0..20 {
        let q: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut oracle: Vec<(String, f64)> = big
            .entries()
            .iter()
            .map(|e| {
                let v = e.embedding.values();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                (e.phrase.text(), v.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / (n * qn))
            })
            .collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let got = big.query(&q, 100).map_err(|e| e.to_string())?;
        rankings_equal &= got
            .ranking
            .iter()
            .zip(&oracle)
            .all(|(r, (t, _))| r.phrase.text() == *t)
            && got.ranking.len() == 100;
    }
    check(
        self_hits == lut.len() && worst <= SELF_QUERY_TOLERANCE && rankings_equal,
        format!(
            "self-query {self_hits}/{}, max |C_phrase - 1| {worst:.1e}; 100-entry rankings equal brute force: {rankings_equal}",
            lut.len()
        ),
    )
}

fn run_repro() -> Result<(Vec<u8>, Duration), String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_prk"))
        .args(["repro", "--seed", &REPRO_SEED.to_string(), "--json"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok((out.stdout, start.elapsed()))
}

fn toy_training(report: &ReproReport, elapsed: Duration) -> Result<String, String> {
    let s = &report.summary;
    let rare_on = s.rare_top1_composition_on.ok_or("no rare classes")?;
    let rare_off = s.rare_top1_composition_off.ok_or("no rare classes")?;
    let a = s.top1 >= TOP1_THRESHOLD;
    let b = s.min_centroid_distance_with_triplet >= s.min_centroid_distance_without_triplet;
    let c = rare_on >= PINNED_RARE_TOP1_COMPOSITION_ON - PIN_TOLERANCE
        && rare_off >= PINNED_RARE_TOP1_COMPOSITION_OFF - PIN_TOLERANCE;
    let d = s.top1_word2vec_targets.is_finite() && s.top1_random_targets.is_finite();
    check(
        a && b && c && d && elapsed <= TRAIN_BUDGET,
        format!(
            "(a) top-1 {:.4} >= {TOP1_THRESHOLD}: {a}; (b) min centroid distance beta=10 {:.4} vs beta=0 {:.4}: {b}; \
             (c) rare top-1 composition on {rare_on:.4} / off {rare_off:.4} vs pinned {PINNED_RARE_TOP1_COMPOSITION_ON} / \
             {PINNED_RARE_TOP1_COMPOSITION_OFF}: {c}; (d) top-1 word2vec {:.4} / random {:.4}; {:.1} s",
            s.top1,
            s.min_centroid_distance_with_triplet,
            s.min_centroid_distance_without_triplet,
            s.top1_word2vec_targets,
            s.top1_random_targets,
            elapsed.as_secs_f64()
        ),
    )
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/repro_seed7.json")
}

fn determinism(first: &[u8], second: &[u8]) -> Result<String, String> {
    let golden = golden_path();
    if std::env::var_os("PRK_BLESS").is_some() {
        fs::write(&golden, first).map_err(|e| e.to_string())?;
    }
    let identical = first == second;
    let pinned = fs::read(&golden).map_err(|e| format!("{}: {e}", golden.display()))?;
    let matches_golden = first == pinned.as_slice();
    check(
        identical && matches_golden,
        format!(
            "two runs byte-identical: {identical} ({} bytes); matches golden file: {matches_golden}",
            first.len()
        ),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let mut gate = Gate { failures: 0 };
    gate.report("1", "format fidelity", format_fidelity());
    gate.report("2", "worked example", worked_example());
    gate.report("3", "composition support", composition_support());
    gate.report("4", "gradient correctness", gradient_correctness());
    gate.report("5", "loss algebra", loss_algebra());
    gate.report("6", "retrieval", retrieval());

    match (run_repro(), run_repro()) {
        (Ok((first, elapsed)), Ok((second, _))) => {
            match serde_json::from_slice::<ReproReport>(&first) {
                Ok(report) => gate.report("7", "toy training", toy_training(&report, elapsed)),
                Err(e) => gate.report("7", "toy training", Err(e.to_string())),
            }
            gate.report("8", "determinism", determinism(&first, &second));
        }
        (Err(e), _) | (_, Err(e)) => {
            gate.report("7", "toy training", Err(e.clone()));
            gate.report("8", "determinism", Err(e));
        }
    }

    println!("acceptance: {} of 8 criteria failed", gate.failures);
    if gate.failures > 0 {
        std::process::exit(1);
    }
}

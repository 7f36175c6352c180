use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use prk_core::composition::{compose, support, CompositionConfig, Weighting};
use prk_core::experiment::{prepare, init_head, run_experiment, ExperimentConfig};
use prk_core::gradcheck::{run_gradcheck, GradcheckLoss};
use prk_core::head::PhraseHead;
use prk_core::lut::{build_lut, LookUpTable};
use prk_core::neighborhood::{build_neighborhoods, NeighborhoodConfig, Neighborhoods};
use prk_core::phrase::{read_annotations, write_phrase_vectors, ConcatEncoder, PhraseEncoder, RelationalPhrase};
use prk_core::repro::run_repro;
use prk_core::store::{EmbeddingStore, Format, OovPolicy};
use prk_core::trainer::evaluate;

#[derive(Parser)]
#[command(name = "prk", version, about = "Relational phrase embeddings, composition, losses and LUT retrieval")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// word2vec model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "bin", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct ExperimentArgs {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. --set beta=0. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the vector of one word.
    Embed {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        word: String,
        #[arg(long, default_value = "error", value_parser = parse_oov)]
        oov: OovPolicy,
    },
    /// Encode annotated triplets into phrase embeddings.
    Encode {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build semantic neighborhood sets.
    Neighbors {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated query words.
        #[arg(long, value_delimiter = ',', required = true)]
        words: Vec<String>,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        #[arg(long, default_value_t = 0.7, value_parser = parse_probability)]
        tsim: f64,
        /// Restrict candidates to the words listed (one per line) in this file.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample composed phrases.
    Compose {
        #[arg(long)]
        phrase: String,
        #[arg(long)]
        neighbors: PathBuf,
        #[arg(long, default_value_t = 0.8, value_parser = parse_probability)]
        pv: f64,
        #[arg(long, default_value_t = 0.2, value_parser = parse_probability)]
        po: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "uniform", value_parser = parse_weighting)]
        weighting: Weighting,
    },
    /// Build or query a lookup table.
    Lut {
        #[command(subcommand)]
        action: LutCommand,
    },
    /// Compare analytic loss gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value = "phrase", value_parser = parse_gradcheck_loss)]
        loss: GradcheckLoss,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train the toy phrase head.
    Train {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Report destination (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV loss curve.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Save the trained head (JSON).
        #[arg(long)]
        save_head: Option<PathBuf>,
    },
    /// Evaluate a saved head on the configured synthetic test split.
    Eval {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long)]
        head: PathBuf,
    },
    /// Run the bundled end-to-end fixture pipeline.
    Repro {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LutCommand {
    Build {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Query {
        #[arg(long)]
        lut: PathBuf,
        /// Query vector: decimal numbers separated by whitespace or commas.
        #[arg(long)]
        vec: PathBuf,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
    },
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: prk_core::Error| e.to_string())
}

fn parse_oov(s: &str) -> Result<OovPolicy, String> {
    s.parse().map_err(|e: prk_core::Error| e.to_string())
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    s.parse().map_err(|e: prk_core::Error| e.to_string())
}

fn parse_gradcheck_loss(s: &str) -> Result<GradcheckLoss, String> {
    s.parse().map_err(|e: prk_core::Error| e.to_string())
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_model(args: &ModelArgs) -> anyhow::Result<EmbeddingStore> {
    EmbeddingStore::load_path(&args.model, args.format)
        .with_context(|| format!("loading {}", args.model.display()))
}

fn load_phrases(path: &Path) -> anyhow::Result<Vec<RelationalPhrase>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_annotations(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn experiment_config(args: &ExperimentArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_str(&text)?;
    }
    for item in &args.overrides {
        let Some((k, v)) = item.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {item:?}");
        };
        config.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Embed { model, word, oov } => {
            let store = load_model(&model)?;
            let vector = store.lookup(&word, oov)?;
            if json {
                print_json(&serde_json::json!({ "word": word, "vector": vector }))?;
            } else {
                let values: Vec<String> = vector.iter().map(|v| v.to_string()).collect();
                println!("{word} {}", values.join(" "));
            }
        }
        Command::Encode {
            model,
            annotations,
            out,
        } => {
            let store = load_model(&model)?;
            let encoder = ConcatEncoder::new(&store);
            let mut seen = std::collections::HashSet::new();
            let mut entries = Vec::new();
            for phrase in load_phrases(&annotations)? {
                if seen.insert(phrase.clone()) {
                    let e = encoder.encode(&phrase)?;
                    entries.push((phrase, e));
                }
            }
            write_phrase_vectors(BufWriter::new(File::create(&out)?), &entries)?;
            if json {
                print_json(&serde_json::json!({
                    "phrases": entries.len(),
                    "dimension": encoder.output_dimension(),
                    "out": out,
                }))?;
            } else {
                println!(
                    "encoded {} phrases ({}-d) to {}",
                    entries.len(),
                    encoder.output_dimension(),
                    out.display()
                );
            }
        }
        Command::Neighbors {
            model,
            words,
            k,
            tsim,
            pool,
            out,
        } => {
            let store = load_model(&model)?;
            let pool = match pool {
                Some(p) => Some(
                    fs::read_to_string(&p)?
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty())
                        .map(str::to_string)
                        .collect::<Vec<_>>(),
                ),
                None => None,
            };
            let config = NeighborhoodConfig::new(k as usize, tsim)?;
            let sets = build_neighborhoods(&store, &words, config, pool.as_deref())?;
            if let Some(path) = &out {
                sets.save(BufWriter::new(File::create(path)?))?;
            }
            if json {
                print_json(&sets)?;
            } else if out.is_none() {
                sets.save(io::stdout().lock())?;
            } else {
                println!("wrote {} neighborhoods to {}", sets.len(), out.unwrap().display());
            }
        }
        Command::Compose {
            phrase,
            neighbors,
            pv,
            po,
            n,
            seed,
            weighting,
        } => {
            let phrase = RelationalPhrase::parse(&phrase)?;
            let sets = Neighborhoods::load(BufReader::new(
                File::open(&neighbors).with_context(|| format!("opening {}", neighbors.display()))?,
            ))?;
            let config = CompositionConfig {
                p_v: pv,
                p_o: po,
                weighting,
                seed,
            };
            config.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut samples = Vec::with_capacity(n);
            let mut freq: BTreeMap<String, usize> = BTreeMap::new();
            let (mut verbs, mut objects) = (0usize, 0usize);
            for _ in 0..n {
                let c = compose(&phrase, &sets, &config, &mut rng);
                verbs += (c.verb != phrase.verb) as usize;
                objects += (c.object != phrase.object) as usize;
                *freq.entry(c.text()).or_default() += 1;
                samples.push(c.text());
            }
            let supp = support(&phrase, &sets);
            let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
            if json {
                print_json(&serde_json::json!({
                    "phrase": phrase.text(),
                    "support_size": supp.size,
                    "samples": samples,
                    "frequencies": freq,
                    "verb_replacement_rate": rate(verbs),
                    "object_replacement_rate": rate(objects),
                }))?;
            } else {
                for s in &samples {
                    println!("{s}");
                }
                println!();
                println!("support size {}", supp.size);
                println!("verb replaced {:.4}  object replaced {:.4}", rate(verbs), rate(objects));
                for (p, c) in &freq {
                    println!("{c:>8} {:>8.4}  {p}", rate(*c));
                }
            }
        }
        Command::Lut { action } => match action {
            LutCommand::Build {
                model,
                annotations,
                out,
            } => {
                let store = load_model(&model)?;
                let lut = build_lut(&ConcatEncoder::new(&store), &load_phrases(&annotations)?)?;
                lut.save(BufWriter::new(File::create(&out)?))?;
                if json {
                    print_json(&serde_json::json!({ "entries": lut.len(), "dimension": lut.dimension() }))?;
                } else {
                    println!("{} entries ({}-d) written to {}", lut.len(), lut.dimension(), out.display());
                }
            }
            LutCommand::Query { lut, vec, k } => {
                let table = LookUpTable::load(BufReader::new(File::open(&lut)?))?;
                let text = fs::read_to_string(&vec)?;
                let query: Vec<f64> = text
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<f64>().with_context(|| format!("bad number {s:?}")))
                    .collect::<anyhow::Result<_>>()?;
                let result = table.query(&query, k as usize)?;
                if json {
                    print_json(&result)?;
                } else {
                    for (i, r) in result.ranking.iter().enumerate() {
                        println!("{:>3}  {:.6}  {}", i + 1, r.similarity, r.phrase);
                    }
                }
            }
        },
        Command::Gradcheck { loss, trials, seed } => {
            let report = run_gradcheck(loss, trials, seed)?;
            if json {
                print_json(&report)?;
            } else {
                println!(
                    "{:?}: max relative error {:.3e} over {} trials (tolerance {:.0e}) {}",
                    report.loss,
                    report.max_rel_error,
                    report.trials,
                    report.tolerance,
                    if report.passed { "PASS" } else { "FAIL" }
                );
            }
            if !report.passed {
                bail!("gradient check failed for {loss:?}");
            }
        }
        Command::Train {
            experiment,
            out,
            curve,
            save_head,
        } => {
            let config = experiment_config(&experiment)?;
            let (report, head) = run_experiment(&config)?;
            fs::write(&out, serde_json::to_string_pretty(&report)? + "\n")?;
            if let Some(path) = curve {
                let mut w = BufWriter::new(File::create(path)?);
                writeln!(w, "epoch,phrase_loss,distilling,triplet,hoi_loss,total_loss")?;
                for e in &report.training.epochs {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        e.epoch,
                        e.phrase_loss,
                        e.distilling,
                        e.triplet,
                        e.hoi_loss.map(|v| v.to_string()).unwrap_or_default(),
                        e.total_loss
                    )?;
                }
            }
            if let Some(path) = save_head {
                fs::write(path, serde_json::to_string(&head)?)?;
            }
            let m = &report.training.metrics;
            if json {
                print_json(&report)?;
            } else {
                println!(
                    "top1 {:.4}  top5 {:.4}  rare top1 {}  nonrare top1 {}",
                    m.top1,
                    m.top5,
                    fmt_opt(m.rare_top1),
                    fmt_opt(m.nonrare_top1)
                );
                println!("report written to {}", out.display());
            }
        }
        Command::Eval { experiment, head } => {
            let config = experiment_config(&experiment)?;
            let prepared = prepare(&config)?;
            let head: PhraseHead = serde_json::from_str(&fs::read_to_string(&head)?)?;
            let expected = init_head(&config, prepared.lut.dimension())?.widths();
            if head.widths() != expected {
                bail!("head widths {:?} do not match configuration {:?}", head.widths(), expected);
            }
            let metrics = evaluate(&head, &prepared.dataset, &prepared.dataset.test, &prepared.lut)?;
            if json {
                print_json(&metrics)?;
            } else {
                println!(
                    "samples {}  top1 {:.4}  top5 {:.4}  rare top1 {}  nonrare top1 {}",
                    metrics.samples,
                    metrics.top1,
                    metrics.top5,
                    fmt_opt(metrics.rare_top1),
                    fmt_opt(metrics.nonrare_top1)
                );
            }
        }
        Command::Repro { seed, out } => {
            let report = run_repro(seed)?;
            if let Some(path) = &out {
                fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            if json {
                print_json(&report)?;
            } else {
                let s = &report.summary;
                println!("kiss neighbors:");
                for n in &report.kiss_neighborhood.neighbors {
                    println!("  {:<10} {:.4}", n.token, n.similarity);
                }
                println!("composition support (human kiss horse): {}", report.composition.support_size);
                println!(
                    "verb replacement rate {:.4} (p_v {})",
                    report.composition.verb_replacement_rate, report.composition.p_v
                );
                for g in &report.gradcheck {
                    println!("gradcheck {:<8?} {:.3e} {}", g.loss, g.max_rel_error, if g.passed { "PASS" } else { "FAIL" });
                }
                println!("top1 {:.4}  with triplet {:.4}", s.top1, s.top1_with_triplet);
                println!(
                    "min centroid distance: triplet {:.4}  no triplet {:.4}",
                    s.min_centroid_distance_with_triplet, s.min_centroid_distance_without_triplet
                );
                println!(
                    "rare top1: composition on {}  off {}",
                    fmt_opt(s.rare_top1_composition_on),
                    fmt_opt(s.rare_top1_composition_off)
                );
                println!(
                    "top1: word2vec targets {:.4}  random targets {:.4}",
                    s.top1_word2vec_targets, s.top1_random_targets
                );
            }
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("usage error"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

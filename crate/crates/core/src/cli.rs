use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use serde_json::Value;

use tempora::analyze::{self, LabeledBeta, DEFAULT_KEYWORDS};
use tempora::checkpoint::{self, Checkpoint};
use tempora::corpus::{self, sha256_hex, Fractions, Vocabulary};
use tempora::eval;
use tempora::model::embeddings::load_embeddings;
use tempora::model::ModelParams;
use tempora::train::{self, TrainConfig};
use tempora::Error;

#[derive(Debug, Parser)]
#[command(name = "tempora", version, about = "Train dynamic embedded topic models on year-stamped corpora and report topic evolution")]
pub struct Cli {
    /// Worker threads for per-document work (1 = fully sequential).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a time-sliced bag-of-words dataset from a `year,text` CSV.
    Preprocess(PreprocessArgs),
    /// Train a model on a preprocessed dataset.
    Train(TrainArgs),
    /// Perplexity, diversity and coherence of a trained model.
    Eval(EvalArgs),
    /// Top-word evolution table and word trends for one topic.
    Report(ReportArgs),
    /// Print the manifests of a dataset, run directory or beta file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    #[arg(long, value_name = "CSV")]
    input: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    min_df: usize,
    #[arg(long, default_value_t = 0.85)]
    train: f64,
    #[arg(long, default_value_t = 0.05)]
    val: f64,
    #[arg(long, default_value_t = 0.10)]
    test: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stopword list, one word per line (default: bundled English list).
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
    /// Treat each CSV row as one document instead of splitting paragraphs.
    #[arg(long)]
    no_paragraph_split: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// JSON file mirroring the training configuration; flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    topics: Option<usize>,
    /// Hidden width of the topic-proportion encoder.
    #[arg(long)]
    hidden: Option<usize>,
    /// Embedding size.
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long)]
    eta_hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    sigma2_alpha: Option<f64>,
    #[arg(long)]
    sigma2_eta: Option<f64>,
    #[arg(long)]
    sigma2_theta: Option<f64>,
    /// Pretrained word embeddings (`term v1 ... vL` per line).
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Keep the word embeddings fixed during training.
    #[arg(long)]
    freeze_embeddings: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_name = "DIR")]
    checkpoint: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicArg {
    Auto,
    Id(usize),
}

fn parse_topic(s: &str) -> std::result::Result<TopicArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(TopicArg::Auto);
    }
    s.parse().map(TopicArg::Id).map_err(|_| format!("expected `auto` or a topic id, got {s:?}"))
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long, value_name = "FILE")]
    beta: PathBuf,
    /// Vocabulary file (default: `vocab.txt` next to the beta file).
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// `auto` selects the topic with the most keyword mass.
    #[arg(long, default_value = "auto", value_parser = parse_topic)]
    topic: TopicArg,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KEYWORDS.map(String::from))]
    keywords: Vec<String>,
    /// First report year (default: first slice year).
    #[arg(long)]
    start: Option<i32>,
    #[arg(long, default_value_t = 6)]
    interval: i32,
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Terms whose probability trends are exported.
    #[arg(long, value_delimiter = ',')]
    query: Vec<String>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    path: PathBuf,
}

/// Collapses a multi-line message into one line, dropping clap's usage
/// and help hints.
pub fn one_line(msg: &str) -> String {
    let mut parts = Vec::new();
    for line in msg.lines() {
        let l = line.trim();
        if l.starts_with("Usage:") || l.starts_with("For more information") {
            break;
        }
        if !l.is_empty() {
            parts.push(l.strip_prefix("error: ").unwrap_or(l));
        }
    }
    parts.join(" ")
}

/// Error code and process exit status for a failure.
pub fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if err.is_validation() => (err.code(), 3),
        Some(err) => (err.code(), 1),
        None => ("runtime_error", 1),
    }
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: C,
    inputs: BTreeMap<String, String>,
    started_at: String,
    finished_at: String,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))?;
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

/// Writes the manifest via a temporary file and rename so readers never
/// observe a partial file.
fn write_run_manifest<C: Serialize>(path: &Path, subcommand: &str, config: C, inputs: BTreeMap<String, String>, started_at: String) -> Result<()> {
    let m = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config,
        inputs,
        started_at,
        finished_at: now(),
    };
    let tmp = path.with_extension("json.tmp");
    write_file(&tmp, &json_bytes(&m))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Invalid("--threads must be at least 1".into()).into());
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Report(a) => report(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let started = now();
    let mut inputs = BTreeMap::new();
    inputs.insert(a.input.display().to_string(), hash_file(&a.input)?);
    let stopwords = match &a.stopwords {
        Some(p) => {
            inputs.insert(p.display().to_string(), hash_file(p)?);
            corpus::load_stopwords(p)?
        }
        None => corpus::default_stopwords(),
    };
    let raw = corpus::load_yearly_csv(&a.input)?;
    let docs = if a.no_paragraph_split { raw } else { corpus::split_paragraphs(&raw) };
    info!("{} documents", docs.records.len());
    let fractions = Fractions {
        train: a.train,
        val: a.val,
        test: a.test,
    };
    let dataset = corpus::build_dataset(&docs, &stopwords, a.min_df, fractions, a.seed)?;
    corpus::save_dataset(&dataset, &a.out)?;
    let m = dataset.manifest();
    println!(
        "vocabulary {}, slices {} ({}..{}), train {}, val {}, test {}",
        m.counts.vocab,
        m.slices.len(),
        m.slices.first().unwrap(),
        m.slices.last().unwrap(),
        m.counts.train,
        m.counts.val,
        m.counts.test
    );
    write_run_manifest(&a.out.join("run_manifest.json"), "preprocess", &a, inputs, started)
}

fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut c = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str::<TrainConfig>(&text).map_err(|e| Error::Invalid(format!("config {}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    let h = &mut c.hyper;
    macro_rules! set {
        ($slot:expr, $flag:expr) => {
            if let Some(v) = $flag {
                $slot = v;
            }
        };
    }
    set!(h.num_topics, a.topics);
    set!(h.theta_hidden, a.hidden);
    set!(h.embed_size, a.embed);
    set!(h.eta_hidden, a.eta_hidden);
    set!(h.sigma2_alpha, a.sigma2_alpha);
    set!(h.sigma2_eta, a.sigma2_eta);
    set!(h.sigma2_theta, a.sigma2_theta);
    set!(c.epochs, a.epochs);
    set!(c.batch_size, a.batch_size);
    set!(c.lr, a.lr);
    set!(c.clip_norm, a.clip_norm);
    set!(c.seed, a.seed);
    set!(c.eval_every, a.eval_every);
    if a.freeze_embeddings {
        c.train_embeddings = false;
    }
    Ok(c)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let started = now();
    let mut inputs = BTreeMap::new();
    let sums = a.data.join("checksums.txt");
    inputs.insert(sums.display().to_string(), hash_file(&sums)?);
    if let Some(p) = &a.config {
        inputs.insert(p.display().to_string(), hash_file(p)?);
    }
    let dataset = corpus::load_dataset(&a.data)?;
    let config = resolve_train_config(&a)?.resolve(&dataset)?;
    if config.batch_size > dataset.train.len() {
        info!("batch size {} exceeds the {} training documents; using full batches", config.batch_size, dataset.train.len());
    }
    let mut init = ModelParams::init(&config.hyper, config.seed);
    if let Some(p) = &a.embeddings {
        inputs.insert(p.display().to_string(), hash_file(p)?);
        let loaded = load_embeddings(p, &dataset.vocabulary, config.hyper.embed_size, config.seed)?;
        info!("{} of {} terms missing from the embedding file", loaded.missing.len(), dataset.vocab_size());
        init.rho = loaded.rho;
    }
    info!(
        "training K={} L={} H={} on {} documents, {} slices, V={}",
        config.hyper.num_topics,
        config.hyper.embed_size,
        config.hyper.theta_hidden,
        dataset.train.len(),
        dataset.num_slices(),
        dataset.vocab_size()
    );
    let (params, history) = train::train_from(&dataset, &config, init, |_| {})?;

    let vocab_hash = dataset.vocabulary.hash();
    checkpoint::save_checkpoint(
        &a.out,
        &Checkpoint {
            params: params.clone(),
            config,
            epoch: config.epochs,
            slices: dataset.slices.clone(),
            vocab_hash: vocab_hash.clone(),
        },
    )?;
    let beta = train::export_beta(&params)?;
    checkpoint::save_beta(&a.out, &beta, &dataset.slices, &vocab_hash)?;
    write_file(&a.out.join("vocab.txt"), dataset.vocabulary.to_text().as_bytes())?;
    write_file(&a.out.join("history.json"), &json_bytes(&history))?;
    for (e, (elbo, ppl)) in history.train_elbo.iter().zip(&history.val_perplexity).enumerate() {
        match ppl {
            Some(p) => println!("epoch {}: train elbo/doc {elbo:.4}, validation perplexity {p:.3}", e + 1),
            None => println!("epoch {}: train elbo/doc {elbo:.4}", e + 1),
        }
    }
    write_run_manifest(&a.out.join("run_manifest.json"), "train", config, inputs, started)
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let started = now();
    let mut inputs = BTreeMap::new();
    for dir in [&a.data, &a.checkpoint] {
        let sums = dir.join("checksums.txt");
        inputs.insert(sums.display().to_string(), hash_file(&sums)?);
    }
    let dataset = corpus::load_dataset(&a.data)?;
    let ckpt = checkpoint::load_checkpoint(&a.checkpoint)?;
    ckpt.check_compatible(&dataset)?;
    let report = eval::evaluate(&ckpt.params, &ckpt.config.hyper, &dataset)?;
    let bytes = json_bytes(&report);
    write_file(&a.out, &bytes)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "eval".into());
    let manifest = a.out.with_file_name(format!("{stem}.run_manifest.json"));
    write_run_manifest(&manifest, "eval", &a, inputs, started)
}

fn report(a: ReportArgs) -> Result<()> {
    let started = now();
    let mut inputs = BTreeMap::new();
    let (beta, manifest) = checkpoint::load_beta(&a.beta)?;
    inputs.insert(a.beta.display().to_string(), manifest.sha256.clone());
    let vocab_path = a.vocab.clone().unwrap_or_else(|| a.beta.with_file_name("vocab.txt"));
    let vocab_text = fs::read_to_string(&vocab_path).map_err(|e| io_err(&vocab_path, e))?;
    inputs.insert(vocab_path.display().to_string(), sha256_hex(vocab_text.as_bytes()));
    let vocabulary = Vocabulary::from_text(&vocab_text)?;
    if vocabulary.hash() != manifest.vocab_hash {
        return Err(Error::Invalid(format!("{} does not match the vocabulary the beta was trained with", vocab_path.display())).into());
    }
    let lb = LabeledBeta::new(beta, vocabulary, manifest.slices.clone())?;

    let selection = match a.topic {
        TopicArg::Auto => {
            let s = analyze::select_topic_by_keywords(&lb, &a.keywords)?;
            if !s.missing_keywords.is_empty() {
                log::warn!("keywords not in vocabulary: {}", s.missing_keywords.join(", "));
            }
            Some(s)
        }
        TopicArg::Id(_) => None,
    };
    let topic = match (a.topic, &selection) {
        (TopicArg::Id(k), _) => k,
        (TopicArg::Auto, Some(s)) => s.topic,
        (TopicArg::Auto, None) => unreachable!(),
    };
    let start = a.start.unwrap_or(lb.years[0]);
    let mut rep = analyze::evolution_report(&lb, topic, start, a.interval, a.top, &a.query)?;
    rep.selection = selection;
    analyze::export_report(&rep, &a.out)?;

    if let Some(s) = &rep.selection {
        let scores: Vec<String> = s.scores.iter().map(|x| format!("{x:.4}")).collect();
        println!("selected topic {} (keyword scores {})", s.topic, scores.join(", "));
    }
    for row in &rep.rows {
        let words: Vec<&str> = row.words.iter().map(|w| w.term.as_str()).collect();
        println!("{}: {}", row.year, words.join(", "));
    }
    write_run_manifest(&a.out.join("run_manifest.json"), "report", &a, inputs, started)
}

fn read_json(path: &Path) -> Result<Value> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        Error::Json {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn inspect(a: InspectArgs) -> Result<()> {
    let value = if a.path.is_dir() {
        let mut out = serde_json::Map::new();
        for name in ["manifest.json", "beta.json", "run_manifest.json", "history.json"] {
            let p = a.path.join(name);
            if p.is_file() {
                out.insert(name.trim_end_matches(".json").to_string(), read_json(&p)?);
            }
        }
        if out.is_empty() {
            return Err(Error::Invalid(format!("{} contains no manifest", a.path.display())).into());
        }
        Value::Object(out)
    } else if a.path.extension().is_some_and(|e| e == "json") {
        read_json(&a.path)?
    } else {
        read_json(&a.path.with_extension("json"))?
    };
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

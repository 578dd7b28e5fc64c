use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use seekqa::belief::{BeliefEncoder, FeatureEncoder};
use seekqa::corpus::{ingest_corpus, load_questions, validate_questions, Corpus, Question};
use seekqa::harness::{
    format_table, run_strategy, step_limit_sweep, Agent, AgentConfig, MetricsReport, StrategySpec,
    DEFAULT_STEP_LIMIT,
};
use seekqa::model::Model;
use seekqa::retrieval::{
    build_dense_index, build_sparse_index, load_lexicon, read_embedding_file, write_embedding_file,
    Embedder, RetrievalConfig, Retriever, DEFAULT_B, DEFAULT_DEPTH, DEFAULT_K1,
};
use seekqa::synth::{synthesize_corpus, SynthSpec, SUITE_EMBED_DIM};
use seekqa::training::{train, write_log, TrainConfig, Validation};
use seekqa::Environment;

#[derive(Parser)]
#[command(
    name = "seekqa",
    version,
    about = "Adaptive information-seeking question answering"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Corpus JSONL file.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Question JSONL file.
    #[arg(long, global = true)]
    questions: Option<PathBuf>,
    /// Model parameter file.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Maximum steps per episode.
    #[arg(long, global = true, default_value_t = DEFAULT_STEP_LIMIT)]
    step_limit: usize,
    /// Retrieval depth of every ranked list.
    #[arg(long, global = true, default_value_t = DEFAULT_DEPTH)]
    top_k: usize,
    /// Strategy expression, or a comma-separated list for compare-strategies.
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Output file (a directory for synth).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory written by synth; fills in --corpus, --questions and --lexicon.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Synonym lexicon (`variant<TAB>canonical`); enables the hash-bow-lexicon embedder.
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Precomputed passage vectors replacing the hashing embedder's.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Embedding width.
    #[arg(long, global = true, default_value_t = SUITE_EMBED_DIM)]
    dim: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and write it back in canonical form.
    Ingest,
    /// Build the BM25 index and write its statistics.
    IndexSparse {
        #[arg(long, default_value_t = DEFAULT_K1)]
        k1: f64,
        #[arg(long, default_value_t = DEFAULT_B)]
        b: f64,
    },
    /// Embed every passage and write an embedding file.
    IndexDense,
    /// Generate a synthetic suite directory.
    Synth {
        #[arg(long, default_value_t = 200)]
        train_questions: usize,
        #[arg(long, default_value_t = 200)]
        dev_questions: usize,
        #[arg(long, default_value_t = 2)]
        hops: u8,
        #[arg(long, default_value_t = 8)]
        distractors: usize,
        #[arg(long, default_value_t = 0.3)]
        mismatch: f64,
        #[arg(long, default_value_t = 0.3)]
        dropout: f64,
        #[arg(long, default_value_t = 0.0)]
        yes_no: f64,
    },
    /// Train every head by imitating the oracle.
    Train {
        /// Held-out questions for per-epoch metrics and checkpoint selection.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 5e-3)]
        lr: f64,
    },
    /// Run episodes and write their traces as JSONL.
    Run,
    /// Run episodes and write the metrics report.
    Eval {
        /// Comma-separated step limits; reports one row per limit.
        #[arg(long, value_delimiter = ',')]
        step_limit_sweep: Option<Vec<usize>>,
    },
    /// Evaluate several strategies side by side.
    CompareStrategies,
    /// Write the gold-aware agent's traces with its cost tables.
    OracleTrace,
}

/// Misuse of the command line rather than bad data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}\n");
            let _ = <Cli as clap::CommandFactory>::command().write_help(&mut std::io::stderr());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if g.step_limit == 0 {
        return Err(usage("--step-limit must be at least 1"));
    }
    if g.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    match &cli.command {
        Command::Ingest => ingest(g),
        Command::IndexSparse { k1, b } => index_sparse(g, *k1, *b),
        Command::IndexDense => index_dense(g),
        Command::Synth {
            train_questions,
            dev_questions,
            hops,
            distractors,
            mismatch,
            dropout,
            yes_no,
        } => {
            let spec = SynthSpec {
                questions: *train_questions,
                dev_questions: *dev_questions,
                hops: *hops,
                distractors: *distractors,
                mismatch: *mismatch,
                dropout: *dropout,
                yes_no: *yes_no,
            };
            let out = out_path(g)?;
            let suite = synthesize_corpus(&spec, g.seed)?;
            suite.write_to_dir(out)?;
            log::info!(
                "wrote {} passages and {} questions to {}",
                suite.corpus.len(),
                suite.questions.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train { dev, epochs, lr } => train_cmd(g, dev.as_deref(), *epochs, *lr),
        Command::Run => run_cmd(g),
        Command::Eval { step_limit_sweep } => eval_cmd(g, step_limit_sweep.as_deref()),
        Command::CompareStrategies => compare(g),
        Command::OracleTrace => oracle_trace(g),
    }
}

fn out_path(g: &Global) -> Result<&Path> {
    g.out.as_deref().ok_or_else(|| usage("--out is required"))
}

fn data_file(g: &Global, explicit: &Option<PathBuf>, name: &str, flag: &str) -> Result<PathBuf> {
    match (explicit, &g.data) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(name)),
        (None, None) => Err(usage(format!("{flag} (or --data) is required"))),
    }
}

fn load_corpus(g: &Global) -> Result<Corpus> {
    let path = data_file(g, &g.corpus, "corpus.jsonl", "--corpus")?;
    Ok(ingest_corpus(&path)?.0)
}

fn load_split(g: &Global, corpus: &Corpus, default_name: &str) -> Result<Vec<Question>> {
    let path = data_file(g, &g.questions, default_name, "--questions")?;
    let questions = load_questions(&path)?;
    validate_questions(corpus, &questions)
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(questions)
}

fn embedder(g: &Global) -> Result<Embedder> {
    let lexicon = match (&g.lexicon, &g.data) {
        (Some(p), _) => Some(load_lexicon(p)?),
        (None, Some(dir)) if dir.join("lexicon.tsv").exists() => {
            Some(load_lexicon(&dir.join("lexicon.tsv"))?)
        }
        _ => None,
    };
    let tag = if lexicon.is_some() {
        "hash-bow-lexicon"
    } else {
        "hash-bow"
    };
    Ok(Embedder::from_tag(tag, g.dim, lexicon)?)
}

fn retriever(g: &Global, corpus: Corpus) -> Result<Retriever> {
    let config = RetrievalConfig {
        depth: g.top_k,
        embedder: embedder(g)?,
        ..RetrievalConfig::default()
    };
    let corpus = Arc::new(corpus);
    match &g.embeddings {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let dense = read_embedding_file(f, &corpus, config.embedder.clone())?;
            Ok(Retriever::with_dense(corpus, &config, dense)?)
        }
        None => Ok(Retriever::new(corpus, &config)?),
    }
}

fn load_model(g: &Global) -> Result<(Model, FeatureEncoder)> {
    let path = g
        .model
        .as_deref()
        .ok_or_else(|| usage("--model is required"))?;
    let model = Model::load(path)?;
    let encoder = FeatureEncoder::new(model.dim)?;
    Ok((model, encoder))
}

fn strategies(g: &Global) -> Result<Vec<StrategySpec>> {
    match &g.strategy {
        Some(s) => StrategySpec::parse_list(s).map_err(|e| usage(e.to_string())),
        None => Ok(vec![StrategySpec::adaptive()]),
    }
}

fn single_strategy(g: &Global) -> Result<StrategySpec> {
    let mut list = strategies(g)?;
    if list.len() != 1 {
        return Err(usage("expected a single --strategy"));
    }
    Ok(list.remove(0))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// JSON next to `out`, plus the same rows as a table in `<out>.txt`.
fn write_reports(out: &Path, rows: &[(String, MetricsReport)]) -> Result<()> {
    let value = json!(rows
        .iter()
        .map(|(name, r)| {
            let mut v = serde_json::to_value(r).expect("report serializes");
            v["name"] = json!(name);
            v
        })
        .collect::<Vec<_>>());
    write_json(out, &value)?;
    let table = format_table(rows);
    let table_path = out.with_extension("txt");
    fs::write(&table_path, &table).with_context(|| format!("writing {}", table_path.display()))?;
    eprint!("{table}");
    Ok(())
}

fn agent_config(g: &Global) -> AgentConfig {
    AgentConfig {
        step_limit: g.step_limit,
        ..AgentConfig::default()
    }
}

fn ingest(g: &Global) -> Result<()> {
    let path = data_file(g, &g.corpus, "corpus.jsonl", "--corpus")?;
    let out = out_path(g)?;
    let (corpus, report) = ingest_corpus(&path)?;
    corpus.save(out)?;
    log::info!(
        "{} passages, {} anchors kept, {} dangling dropped, {} out of bounds, {} adjacency links",
        report.passages,
        report.anchors_kept,
        report.dangling_dropped,
        report.out_of_bounds_dropped,
        report.adjacency_links
    );
    Ok(())
}

fn index_sparse(g: &Global, k1: f64, b: f64) -> Result<()> {
    let out = out_path(g)?;
    let corpus = load_corpus(g)?;
    let index = build_sparse_index(&corpus, k1, b)?;
    write_json(
        out,
        &json!({
            "passages": index.num_passages(),
            "vocabulary": corpus.vocabulary_size(),
            "avg_len": index.avg_len(),
            "k1": k1,
            "b": b,
        }),
    )
}

fn index_dense(g: &Global) -> Result<()> {
    let out = out_path(g)?;
    let corpus = load_corpus(g)?;
    let index = build_dense_index(&corpus, embedder(g)?)?;
    write_embedding_file(out, &corpus, &index)?;
    log::info!(
        "embedded {} passages with {} (d_e = {})",
        index.len(),
        index.embedder().tag(),
        index.dim()
    );
    Ok(())
}

fn train_cmd(g: &Global, dev: Option<&Path>, epochs: usize, lr: f64) -> Result<()> {
    let out = out_path(g)?;
    let corpus = load_corpus(g)?;
    let questions = load_split(g, &corpus, "train.jsonl")?;
    let dev_path = match (dev, &g.data) {
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(dir)) if dir.join("dev.jsonl").exists() => Some(dir.join("dev.jsonl")),
        _ => None,
    };
    let dev_questions = match &dev_path {
        Some(p) => {
            let qs = load_questions(p)?;
            validate_questions(&corpus, &qs)?;
            qs
        }
        None => Vec::new(),
    };
    // without a dev file the training questions double as validation
    let held: &[Question] = if dev_questions.is_empty() {
        &questions
    } else {
        &dev_questions
    };
    let r = retriever(g, corpus)?;
    let config = TrainConfig {
        epochs,
        lr,
        seed: g.seed,
        ..TrainConfig::default()
    };
    let encoder = FeatureEncoder::new(config.dim)?;
    let output = train(
        &r,
        &encoder as &dyn BeliefEncoder,
        &questions,
        &Validation {
            states_from: held,
            episodes_on: held,
        },
        &config,
    )?;
    output.model.save(out)?;
    let log_path = out.with_extension("log.csv");
    let mut w = create(&log_path)?;
    write_log(&mut w, &output.log)?;
    w.flush()?;
    log::info!(
        "kept epoch {} of {}; wrote {} and {}",
        output.selected_epoch,
        output.log.len(),
        out.display(),
        log_path.display()
    );
    Ok(())
}

fn run_cmd(g: &Global) -> Result<()> {
    let out = out_path(g)?;
    let (model, encoder) = load_model(g)?;
    let strategy = single_strategy(g)?;
    let corpus = load_corpus(g)?;
    let questions = load_split(g, &corpus, "dev.jsonl")?;
    let r = retriever(g, corpus)?;
    let env = Environment::new(&r);
    let agent = Agent::new(&model, &encoder, agent_config(g));
    let report = run_strategy(&agent, &env, &questions, &strategy)?;
    write_traces(out, &report)?;
    log::info!(
        "{} episodes; P EM {:.2}, #read {:.2}",
        questions.len(),
        report.p_em,
        report.read_mean
    );
    Ok(())
}

fn write_traces(out: &Path, report: &MetricsReport) -> Result<()> {
    let mut w = create(out)?;
    for t in &report.traces {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn eval_cmd(g: &Global, sweep: Option<&[usize]>) -> Result<()> {
    let (model, encoder) = load_model(g)?;
    let out = out_path(g)?;
    let strategy = single_strategy(g)?;
    if sweep.is_some_and(|s| s.is_empty() || s.contains(&0)) {
        return Err(usage("--step-limit-sweep needs positive limits"));
    }
    let corpus = load_corpus(g)?;
    let questions = load_split(g, &corpus, "dev.jsonl")?;
    let r = retriever(g, corpus)?;
    let env = Environment::new(&r);
    let agent = Agent::new(&model, &encoder, agent_config(g));
    let rows = match sweep {
        Some(limits) => step_limit_sweep(&agent, &env, &questions, &strategy, limits)?
            .into_iter()
            .map(|(t, r)| (format!("{strategy} T={t}"), r))
            .collect(),
        None => {
            let mut report = run_strategy(&agent, &env, &questions, &strategy)?;
            report.traces.clear();
            vec![(strategy.to_string(), report)]
        }
    };
    write_reports(out, &rows)
}

fn compare(g: &Global) -> Result<()> {
    let (model, encoder) = load_model(g)?;
    let out = out_path(g)?;
    let specs = strategies(g)?;
    let corpus = load_corpus(g)?;
    let questions = load_split(g, &corpus, "dev.jsonl")?;
    let r = retriever(g, corpus)?;
    let env = Environment::new(&r);
    let agent = Agent::new(&model, &encoder, agent_config(g));
    let mut rows = Vec::new();
    for spec in &specs {
        log::info!("running {spec}");
        let mut report = run_strategy(&agent, &env, &questions, spec)?;
        report.traces.clear();
        rows.push((spec.to_string(), report));
    }
    write_reports(out, &rows)
}

fn oracle_trace(g: &Global) -> Result<()> {
    let out = out_path(g)?;
    let strategy = single_strategy(g)?;
    let corpus = load_corpus(g)?;
    let questions = load_split(g, &corpus, "dev.jsonl")?;
    let r = retriever(g, corpus)?;
    let env = Environment::new(&r);
    // the oracle never reads the learned parameters
    let model = Model::zeros(seekqa::belief::DEFAULT_DIM);
    let encoder = FeatureEncoder::new(model.dim)?;
    let config = AgentConfig {
        step_limit: g.step_limit,
        record_oracle: true,
        ..AgentConfig::oracle()
    };
    let agent = Agent::new(&model, &encoder, config);
    let report = run_strategy(&agent, &env, &questions, &strategy)?;
    write_traces(out, &report)?;
    log::info!(
        "{} oracle episodes; P EM {:.2}, #read {:.2}",
        questions.len(),
        report.p_em,
        report.read_mean
    );
    Ok(())
}

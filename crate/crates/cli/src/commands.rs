use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use tracing::info;

use okret_core::bm25::{self, Bm25Params, InvertedIndex};
use okret_core::corpus::{load_images, load_passages, CorpusFormat, PassageStore};
use okret_core::dense::{retrieve_dense, DenseIndex, EmbeddingProvider, StubProvider};
use okret_core::eval::{self, evaluate, load_judgments, load_queries, load_run, paired_ttest, write_judgments, write_queries, EvalResult};
use okret_core::fixture::{self, Fixture};
use okret_core::genpipeline::{load_examples, write_jsonl, HttpAdapters, ModelAdapters, PipelineConfig, Pipeline, StubAdapters};
use okret_core::trainer::{train_toy, Sgd, ToyEmbedder, TrainConfig};

use crate::args::*;
use crate::config::{existing, input_path, pick, require, FileConfig};
use crate::error::UsageError;
use crate::header::{ensure_parent, sibling, write_json, write_sidecar, Header, DEFAULT_SEED};

pub fn run(command: Command, cfg: &FileConfig) -> Result<()> {
    match command {
        Command::BuildIndex(a) => build_index(a, cfg),
        Command::TuneBm25(a) => tune_bm25(a, cfg),
        Command::Generate(a) => generate(a, cfg),
        Command::Train(a) => train(a, cfg),
        Command::Retrieve(a) => retrieve(a, cfg),
        Command::Eval(a) => eval_run(a, cfg),
        Command::Compare(a) => compare(a, cfg),
        Command::ExportQueries(a) => export_queries(a),
        Command::Fixture(a) => write_fixture(a),
    }
}

#[derive(Debug, Serialize)]
struct CorpusSpec {
    path: PathBuf,
    format: FormatArg,
}

fn corpus_spec(args: CorpusArgs, cfg: &FileConfig) -> Result<CorpusSpec, UsageError> {
    let path = input_path(args.corpus, cfg.corpus.clone(), "corpus")?;
    let format = pick(args.corpus_format, cfg.corpus_format).unwrap_or(match CorpusFormat::from_path(&path) {
        CorpusFormat::Tsv => FormatArg::Tsv,
        CorpusFormat::Jsonl => FormatArg::Jsonl,
    });
    Ok(CorpusSpec { path, format })
}

fn load_store(spec: &CorpusSpec) -> Result<PassageStore> {
    let format = match spec.format {
        FormatArg::Tsv => CorpusFormat::Tsv,
        FormatArg::Jsonl => CorpusFormat::Jsonl,
    };
    let store = load_passages(&spec.path, format)?;
    info!(passages = store.len(), path = %spec.path.display(), "loaded corpus");
    Ok(store)
}

fn bm25_params(args: &Bm25Args, cfg: &FileConfig) -> Result<Bm25Params> {
    let d = Bm25Params::default();
    let k1 = pick(args.k1, cfg.bm25.k1).unwrap_or(d.k1);
    let b = pick(args.b, cfg.bm25.b).unwrap_or(d.b);
    Bm25Params::new(k1, b).map_err(|e| UsageError(e.to_string()).into())
}

fn index_for(index: Option<PathBuf>, cfg: &FileConfig, store: &PassageStore) -> Result<InvertedIndex> {
    match pick(index, cfg.index.clone()) {
        Some(path) => {
            let path = existing(path, "index")?;
            let index = InvertedIndex::load(&path)?;
            if index.doc_count() != store.len() {
                anyhow::bail!(okret_core::Error::InvalidArgument(format!(
                    "index {} has {} documents but the corpus has {}",
                    path.display(),
                    index.doc_count(),
                    store.len()
                )));
            }
            Ok(index)
        }
        None => Ok(InvertedIndex::build(store)?),
    }
}

fn workers(flag: Option<usize>, cfg: &FileConfig) -> Result<usize, UsageError> {
    let n = pick(flag, cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(UsageError("workers must be >= 1".into()));
    }
    Ok(n)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    ensure_parent(path)?;
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn build_index(a: BuildIndexArgs, cfg: &FileConfig) -> Result<()> {
    let corpus = corpus_spec(a.corpus, cfg)?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let header = Header::new("build-index", &json!({ "corpus": corpus }), seed)?;
    let store = load_store(&corpus)?;
    let index = InvertedIndex::build(&store)?;
    ensure_parent(&a.out)?;
    index.save(&a.out)?;
    write_sidecar(&a.out, &header, &json!({ "documents": index.doc_count(), "terms": index.vocabulary().count() }))?;
    info!(out = %a.out.display(), terms = index.vocabulary().count(), "index written");
    Ok(())
}

fn tune_bm25(a: TuneArgs, cfg: &FileConfig) -> Result<()> {
    let corpus = corpus_spec(a.corpus, cfg)?;
    let validation_path = existing(a.validation, "validation")?;
    let k1_grid = a.k1_grid.unwrap_or_else(bm25::default_k1_grid);
    let b_grid = a.b_grid.unwrap_or_else(bm25::default_b_grid);
    let cutoff = pick(a.cutoff, cfg.cutoff).unwrap_or(eval::DEFAULT_CUTOFF);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let header = Header::new(
        "tune-bm25",
        &json!({ "corpus": corpus, "validation": validation_path, "k1_grid": k1_grid, "b_grid": b_grid, "cutoff": cutoff }),
        seed,
    )?;
    let store = load_store(&corpus)?;
    let index = index_for(a.index, cfg, &store)?;
    let validation = bm25::load_validation(&validation_path)?;
    let report = bm25::tune_params(&index, &store, &validation, &k1_grid, &b_grid, cutoff)?;
    write_json(&a.out, &header, &report)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{:>6}  {:>6}  {:>10}", "k1", "b", format!("MRR@{cutoff}"))?;
    for c in &report.cells {
        let mark = if c.k1 == report.best.k1 && c.b == report.best.b { "  *" } else { "" };
        writeln!(out, "{:>6.2}  {:>6.2}  {:>10.4}{mark}", c.k1, c.b, c.mrr)?;
    }
    info!(k1 = report.best.k1, b = report.best.b, mrr = report.best_mrr, cells = report.cells.len(), "tuning done");
    Ok(())
}

enum AdapterMode {
    Stub,
    Remote(String),
}

fn adapter_mode(spec: &str) -> Result<AdapterMode, UsageError> {
    match spec {
        "stub" => Ok(AdapterMode::Stub),
        s => match s.strip_prefix("remote:") {
            Some(url) if !url.is_empty() => Ok(AdapterMode::Remote(url.to_string())),
            _ => Err(UsageError(format!("adapters must be `stub` or `remote:URL`, got `{s}`"))),
        },
    }
}

fn generate(a: GenerateArgs, cfg: &FileConfig) -> Result<()> {
    let corpus = corpus_spec(a.corpus, cfg)?;
    let images_path = input_path(a.images, cfg.images.clone(), "images")?;
    let adapters_spec = pick(a.adapters, cfg.adapters.clone()).unwrap_or_else(|| "stub".into());
    let mode = adapter_mode(&adapters_spec)?;
    let d = PipelineConfig::default();
    let p = &cfg.pipeline;
    let config = PipelineConfig {
        passages_per_image: pick(a.passages_per_image, p.passages_per_image).unwrap_or(d.passages_per_image),
        threshold: pick(a.threshold, p.threshold).unwrap_or(d.threshold),
        negative_pool_size: pick(a.negative_pool, p.negative_pool_size).unwrap_or(d.negative_pool_size),
        max_phrases_per_passage: pick(a.max_phrases_per_passage, p.max_phrases_per_passage),
        bm25: bm25_params(&a.bm25, cfg)?,
    };
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let workers = workers(a.workers, cfg)?;
    let seed = pick(a.seed, cfg.seed).unwrap_or(DEFAULT_SEED);
    let index_path = pick(a.index, cfg.index.clone());
    // Worker count does not change outputs, so it stays out of the hash.
    let header = Header::new(
        "generate",
        &json!({ "corpus": corpus, "images": images_path, "index": index_path, "adapters": adapters_spec, "pipeline": config }),
        seed,
    )?;

    let store = load_store(&corpus)?;
    let images = load_images(&images_path)?;
    let index = index_for(index_path, cfg, &store)?;
    let adapters: Box<dyn ModelAdapters> = match mode {
        AdapterMode::Stub => Box::new(StubAdapters::new()),
        AdapterMode::Remote(url) => {
            let remote = HttpAdapters::new(url);
            remote
                .health()
                .with_context(|| format!("adapter service at {} is not healthy", remote.base_url()))?;
            Box::new(remote)
        }
    };
    let pipeline = Pipeline::new(&store, &index, adapters.as_ref(), config)?;
    let output = pipeline.run(&images, workers)?;

    let mut w = create(&a.out)?;
    write_jsonl(&mut w, &output.examples)?;
    w.flush()?;
    write_sidecar(&a.out, &header, &json!({ "examples": output.examples.len() }))?;
    let audit_path = a.audit.unwrap_or_else(|| sibling(&a.out, "audit.jsonl"));
    let mut w = create(&audit_path)?;
    write_jsonl(&mut w, &output.audit)?;
    w.flush()?;
    let report_path = a.report.unwrap_or_else(|| sibling(&a.out, "report.json"));
    write_json(&report_path, &header, &json!({ "report": output.report }))?;

    let r = &output.report;
    info!(
        images = r.images,
        passages = r.passages,
        phrases = r.phrases,
        kept = r.kept_after_filter,
        emitted = r.emitted,
        skipped = ?r.skipped,
        "generation done"
    );
    Ok(())
}

fn train(a: TrainArgs, cfg: &FileConfig) -> Result<()> {
    let corpus = corpus_spec(a.corpus, cfg)?;
    let dataset_path = existing(a.dataset, "dataset")?;
    let d = TrainConfig::default();
    let t = &cfg.train;
    let config = TrainConfig {
        epochs: pick(a.epochs, t.epochs).unwrap_or(d.epochs),
        batch_size: pick(a.batch_size, t.batch_size).unwrap_or(d.batch_size),
        lr: pick(a.lr, t.lr).unwrap_or(d.lr),
        seed: pick(a.seed, cfg.seed).unwrap_or(d.seed),
        feature_dim: pick(a.feature_dim, t.feature_dim).unwrap_or(d.feature_dim),
        embed_dim: pick(a.embed_dim, t.embed_dim).unwrap_or(d.embed_dim),
        init_std: pick(a.init_std, t.init_std).unwrap_or(d.init_std),
    };
    if config.batch_size == 0 || config.feature_dim == 0 || config.embed_dim == 0 {
        return Err(UsageError("batch_size, feature_dim and embed_dim must be >= 1".into()).into());
    }
    if !(config.lr.is_finite() && config.init_std.is_finite() && config.init_std >= 0.0) {
        return Err(UsageError("lr and init_std must be finite, init_std >= 0".into()).into());
    }
    let header = Header::new("train", &json!({ "corpus": corpus, "dataset": dataset_path, "train": config }), config.seed)?;
    let store = load_store(&corpus)?;
    let dataset = load_examples(&dataset_path)?;
    let (embedder, log) = train_toy(&dataset, &store, &config, &mut Sgd { lr: config.lr })?;
    ensure_parent(&a.out)?;
    embedder.save(&a.out)?;
    write_sidecar(&a.out, &header, &json!({ "examples": dataset.len(), "log": log }))?;
    info!(steps = log.steps, epoch_loss = ?log.epoch_loss, out = %a.out.display(), "training done");
    Ok(())
}

fn provider(spec: &str, seed: u64) -> Result<Box<dyn EmbeddingProvider>> {
    if let Some(rest) = spec.strip_prefix("stub") {
        let dim = match rest.strip_prefix(':') {
            Some(d) => d
                .parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| UsageError(format!("bad stub dimension in `{spec}`")))?,
            None if rest.is_empty() => 64,
            None => return Err(UsageError(format!("embedder must be a path, `stub` or `stub:DIM`, got `{spec}`")).into()),
        };
        return Ok(Box::new(StubProvider::with_seed(dim, seed)));
    }
    let path = existing(PathBuf::from(spec), "embedder")?;
    Ok(Box::new(ToyEmbedder::load(path)?))
}

fn retrieve(a: RetrieveArgs, cfg: &FileConfig) -> Result<()> {
    let corpus = corpus_spec(a.corpus, cfg)?;
    let queries_path = existing(a.queries, "queries")?;
    let k = a.k.unwrap_or(100);
    if k == 0 {
        return Err(UsageError("k must be >= 1".into()).into());
    }
    let seed = pick(a.seed, cfg.seed).unwrap_or(DEFAULT_SEED);
    let store = load_store(&corpus)?;
    let queries = load_queries(&queries_path)?;
    let (header, run) = match a.mode {
        Mode::Bm25 => {
            let params = bm25_params(&a.bm25, cfg)?;
            let index_path = pick(a.index, cfg.index.clone());
            let header = Header::new(
                "retrieve",
                &json!({ "corpus": corpus, "queries": queries_path, "mode": a.mode, "index": index_path, "bm25": params, "k": k }),
                seed,
            )?;
            let index = index_for(index_path, cfg, &store)?;
            (header, bm25::retrieve_bm25(&index, params, &queries, k))
        }
        Mode::Dense => {
            let spec = require(pick(a.embedder, cfg.embedder.clone()), "embedder")?;
            let workers = workers(a.workers, cfg)?;
            let header = Header::new(
                "retrieve",
                &json!({ "corpus": corpus, "queries": queries_path, "mode": a.mode, "embedder": spec, "k": k }),
                seed,
            )?;
            let provider = provider(&spec, seed)?;
            let index = DenseIndex::build(provider.as_ref(), &store)?;
            if let Some(path) = &a.dense_index_out {
                ensure_parent(path)?;
                index.save(path)?;
                write_sidecar(path, &header, &json!({ "rows": index.len(), "dim": index.dim() }))?;
            }
            (header, retrieve_dense(provider.as_ref(), &index, &queries, k, workers)?)
        }
    };
    let mut w = create(&a.out)?;
    eval::write_run(&mut w, Some(&header.comment()), &run).with_context(|| format!("writing {}", a.out.display()))?;
    w.flush()?;
    info!(queries = run.len(), out = %a.out.display(), "run written");
    Ok(())
}

fn cutoff(flag: Option<usize>, cfg: &FileConfig) -> Result<usize, UsageError> {
    let k = pick(flag, cfg.cutoff).unwrap_or(eval::DEFAULT_CUTOFF);
    if k == 0 {
        return Err(UsageError("cutoff must be >= 1".into()));
    }
    Ok(k)
}

fn eval_run(a: EvalArgs, cfg: &FileConfig) -> Result<()> {
    let corpus = corpus_spec(a.corpus, cfg)?;
    let run_path = existing(a.run, "run")?;
    let judgments_path = existing(a.judgments, "judgments")?;
    let k = cutoff(a.cutoff, cfg)?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let header = Header::new("eval", &json!({ "corpus": corpus, "run": run_path, "judgments": judgments_path, "cutoff": k }), seed)?;
    let store = load_store(&corpus)?;
    let run = load_run(&run_path)?;
    let judgments = load_judgments(&judgments_path)?;
    let result = evaluate(&run, &judgments, &store, k)?;
    print!("{}", result.to_table());
    if let Some(out) = &a.out {
        write_json(out, &header, &result)?;
    }
    info!(mrr = result.mrr, precision = result.precision, queries = result.per_query.len(), "evaluation done");
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    mrr: f64,
    precision: f64,
}

impl From<&EvalResult> for Summary {
    fn from(r: &EvalResult) -> Self {
        Summary {
            mrr: r.mrr,
            precision: r.precision,
        }
    }
}

fn compare(a: CompareArgs, cfg: &FileConfig) -> Result<()> {
    let corpus = corpus_spec(a.corpus, cfg)?;
    let run_a = existing(a.run_a, "run-a")?;
    let run_b = existing(a.run_b, "run-b")?;
    let judgments_path = existing(a.judgments, "judgments")?;
    if a.comparisons == 0 {
        return Err(UsageError("comparisons must be >= 1".into()).into());
    }
    let k = cutoff(a.cutoff, cfg)?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let header = Header::new(
        "compare",
        &json!({ "corpus": corpus, "run_a": run_a, "run_b": run_b, "judgments": judgments_path, "comparisons": a.comparisons, "cutoff": k }),
        seed,
    )?;
    let store = load_store(&corpus)?;
    let judgments = load_judgments(&judgments_path)?;
    let ra = evaluate(&load_run(&run_a)?, &judgments, &store, k)?;
    let rb = evaluate(&load_run(&run_b)?, &judgments, &store, k)?;
    let mrr_test = paired_ttest(&ra.reciprocal_ranks(), &rb.reciprocal_ranks(), a.comparisons)?;
    let p_test = paired_ttest(&ra.precisions(), &rb.precisions(), a.comparisons)?;

    let mut report = BTreeMap::new();
    report.insert("cutoff", json!(k));
    report.insert("comparisons", json!(a.comparisons));
    report.insert("queries", json!(ra.per_query.len()));
    report.insert("a", json!(Summary::from(&ra)));
    report.insert("b", json!(Summary::from(&rb)));
    report.insert("delta", json!({ "mrr": ra.mrr - rb.mrr, "precision": ra.precision - rb.precision }));
    report.insert("mrr_test", json!(mrr_test));
    report.insert("precision_test", json!(p_test));
    if let Some(out) = &a.out {
        write_json(out, &header, &report)?;
    }

    println!("{:<8}  {:>8}  {:>8}  {:>9}  {:>8}  {:>10}", "metric", "a", "b", "a-b", "t", "p_bonf");
    for (name, x, y, t) in [
        (format!("MRR@{k}"), ra.mrr, rb.mrr, &mrr_test),
        (format!("P@{k}"), ra.precision, rb.precision, &p_test),
    ] {
        let flag = if t.degenerate { " (constant difference)" } else { "" };
        println!("{name:<8}  {x:>8.4}  {y:>8.4}  {:>+9.4}  {:>8.3}  {:>10.3e}{flag}", x - y, t.t, t.p_corrected);
    }
    Ok(())
}

fn export_queries(a: ExportArgs) -> Result<()> {
    let dataset_path = existing(a.dataset, "dataset")?;
    let examples = load_examples(&dataset_path)?;
    let (train, held) = if a.held_out > 0 {
        fixture::split_held_out(&examples, a.held_out)
    } else {
        (Vec::new(), examples)
    };
    let header = Header::new(
        "export-queries",
        &json!({ "dataset": dataset_path, "held_out": a.held_out }),
        DEFAULT_SEED,
    )?;
    let queries = fixture::queries_for(&held);
    let mut w = create(&a.queries)?;
    write_queries(&mut w, &queries)?;
    w.flush()?;
    write_sidecar(&a.queries, &header, &json!({ "queries": queries.len() }))?;
    let mut w = create(&a.judgments)?;
    write_judgments(&mut w, &fixture::judgments_for(&held))?;
    w.flush()?;
    write_sidecar(&a.judgments, &header, &json!({ "queries": queries.len() }))?;
    if let Some(path) = &a.train_out {
        let mut w = create(path)?;
        write_jsonl(&mut w, &train)?;
        w.flush()?;
        write_sidecar(path, &header, &json!({ "examples": train.len() }))?;
    }
    info!(queries = queries.len(), train = train.len(), "queries exported");
    Ok(())
}

fn write_fixture(a: FixtureArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(fixture::DEFAULT_SEED);
    Fixture::generate(seed).write(&a.out)?;
    let header = Header::new("fixture", &json!({ "seed": seed }), seed)?;
    for name in ["corpus.tsv", "images.jsonl"] {
        write_sidecar(&a.out.join(name), &header, &json!({}))?;
    }
    info!(out = %a.out.display(), seed, "fixture written");
    Ok(())
}

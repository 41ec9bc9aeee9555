use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "okret", version, about = "Retrieval pretraining toolkit: indexes, synthetic data, training and evaluation")]
pub struct Cli {
    /// TOML config file. Flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log level for messages on standard error.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and persist the BM25 inverted index of a corpus.
    BuildIndex(BuildIndexArgs),
    /// Grid-search BM25 k1 and b for validation MRR.
    TuneBm25(TuneArgs),
    /// Generate (question, image, answer, positive, negative) examples.
    Generate(GenerateArgs),
    /// Train the toy bi-encoder with in-batch negatives.
    Train(TrainArgs),
    /// Produce a run file for a set of queries.
    Retrieve(RetrieveArgs),
    /// Score a run against judgments (MRR@k, P@k).
    Eval(EvalArgs),
    /// Compare two runs with paired t-tests and Bonferroni correction.
    Compare(CompareArgs),
    /// Turn a generated dataset into queries and judgments, optionally split.
    ExportQueries(ExportArgs),
    /// Write the deterministic 200-passage / 20-image fixture.
    Fixture(FixtureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Tsv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Passage corpus (TSV `id<TAB>text` or JSONL `{"id","text"}`).
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Corpus format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub corpus_format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct Bm25Args {
    /// BM25 term-frequency saturation.
    #[arg(long)]
    pub k1: Option<f64>,
    /// BM25 length normalization.
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output index file.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Prebuilt index; built from the corpus when omitted.
    #[arg(long, value_name = "PATH")]
    pub index: Option<PathBuf>,
    /// Validation JSONL `{"query_text", "answers": [..]}`.
    #[arg(long, value_name = "PATH")]
    pub validation: PathBuf,
    /// Comma-separated k1 values [default: 0.5,0.7,...,1.5].
    #[arg(long, value_delimiter = ',')]
    pub k1_grid: Option<Vec<f64>>,
    /// Comma-separated b values [default: 0.2,0.4,0.6,0.8].
    #[arg(long, value_delimiter = ',')]
    pub b_grid: Option<Vec<f64>>,
    /// Rank cutoff for MRR [default: 5].
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Output report JSON.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Image records JSONL `{"image_id", "caption"?}`.
    #[arg(long, value_name = "PATH")]
    pub images: Option<PathBuf>,
    /// Prebuilt index; built from the corpus when omitted.
    #[arg(long, value_name = "PATH")]
    pub index: Option<PathBuf>,
    /// `stub` or `remote:URL` [default: stub].
    #[arg(long, value_name = "MODE")]
    pub adapters: Option<String>,
    /// Passages matched per image caption (M) [default: 5].
    #[arg(long)]
    pub passages_per_image: Option<usize>,
    /// ROUGE-1 F1 threshold a QA answer must exceed (T) [default: 0.5].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// BM25 depth searched for hard negatives [default: 100].
    #[arg(long)]
    pub negative_pool: Option<usize>,
    /// Cap on answer phrases taken per passage.
    #[arg(long)]
    pub max_phrases_per_passage: Option<usize>,
    #[command(flatten)]
    pub bm25: Bm25Args,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed recorded in output headers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset JSONL. Also writes `<out>.header.json`.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Pipeline report JSON [default: `<out>.report.json`].
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Per-example audit JSONL [default: `<out>.audit.jsonl`].
    #[arg(long, value_name = "PATH")]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Generated dataset JSONL.
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,
    /// Passes over the dataset [default: 1].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Examples per batch; each query sees 2B-1 negatives [default: 16].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate of plain gradient descent.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for initialization, feature hashing and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hashed feature buckets.
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Standard deviation of the Gaussian initialization.
    #[arg(long)]
    pub init_std: Option<f64>,
    /// Output embedder JSON. Also writes `<out>.header.json` with the loss log.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bm25,
    Dense,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Queries JSONL `{"query_id", "question", "image_id", "caption"?}`.
    #[arg(long, value_name = "PATH")]
    pub queries: PathBuf,
    /// Retrieval model.
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// BM25 index; built from the corpus when omitted.
    #[arg(long, value_name = "PATH")]
    pub index: Option<PathBuf>,
    #[command(flatten)]
    pub bm25: Bm25Args,
    /// Dense mode: trained embedder JSON, `stub` or `stub:DIM`.
    #[arg(long, value_name = "SPEC")]
    pub embedder: Option<String>,
    /// Dense mode: persist the passage index here.
    #[arg(long, value_name = "PATH")]
    pub dense_index_out: Option<PathBuf>,
    /// Results per query [default: 100].
    #[arg(long)]
    pub k: Option<usize>,
    /// Worker threads for dense search [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed for the stub embedder; recorded in the run header.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output run TSV.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Run TSV `query_id passage_id rank score`.
    #[arg(long, value_name = "PATH")]
    pub run: PathBuf,
    /// Judgments JSONL `{"query_id", "answers": [..]}`.
    #[arg(long, value_name = "PATH")]
    pub judgments: PathBuf,
    /// Rank cutoff [default: 5].
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Metrics JSON; the table always goes to standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// First run TSV.
    #[arg(long, value_name = "PATH")]
    pub run_a: PathBuf,
    /// Second run TSV; deltas are a minus b.
    #[arg(long, value_name = "PATH")]
    pub run_b: PathBuf,
    /// Judgments JSONL `{"query_id", "answers": [..]}`.
    #[arg(long, value_name = "PATH")]
    pub judgments: PathBuf,
    /// Bonferroni family size m (number of simultaneous comparisons).
    #[arg(long)]
    pub comparisons: usize,
    /// Rank cutoff [default: 5].
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Report JSON; a summary always goes to standard output.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Generated dataset JSONL.
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,
    /// Hold out roughly one example in N (by question hash); 0 keeps all.
    #[arg(long, default_value_t = 0)]
    pub held_out: u64,
    /// Queries JSONL for the held-out part (or everything when not splitting).
    #[arg(long, value_name = "PATH")]
    pub queries: PathBuf,
    /// Judgments JSONL matching `--queries`.
    #[arg(long, value_name = "PATH")]
    pub judgments: PathBuf,
    /// Training part of the split as a dataset JSONL.
    #[arg(long, value_name = "PATH")]
    pub train_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Output directory for `corpus.tsv` and `images.jsonl`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Generator seed [default: 20].
    #[arg(long)]
    pub seed: Option<u64>,
}

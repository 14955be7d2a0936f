use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pacmia::eval::{DEFAULT_FRACTIONS, DEFAULT_TRIALS};
use pacmia::{DetectorConfig, Method};

#[derive(Debug, Parser, Serialize)]
#[command(name = "pacmia", version, about = "Membership inference and contamination scoring for language models")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Score a dataset with one or more methods.
    Score(ScoreArgs),
    /// AUC, ROC and F1-max threshold reports from score files.
    Evaluate(EvaluateArgs),
    /// Threshold stability over calibration subsets.
    Calibrate(CalibrateArgs),
    /// Recover logprobs through top-n probes and write a replay file.
    Track(TrackArgs),
    /// Benchmark construction.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Share of scores above a threshold.
    Contamination(ContaminationArgs),
    /// End-to-end run on the synthetic testbed, no network.
    Demo(DemoArgs),
    /// Re-run the command recorded in a manifest.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Score(_) => "score",
            Command::Evaluate(_) => "evaluate",
            Command::Calibrate(_) => "calibrate",
            Command::Track(_) => "track",
            Command::Bench(BenchCommand::Build(_)) => "bench build",
            Command::Bench(BenchCommand::Gate(_)) => "bench gate",
            Command::Contamination(_) => "contamination",
            Command::Demo(_) => "demo",
            Command::Rerun(_) => "rerun",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    /// Greedy longest match over the vocabulary.
    Greedy,
    /// One token per whitespace word.
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanMode {
    Full,
    Output,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Synthetic)]
    pub backend: BackendKind,

    /// Completions API base including the version prefix, e.g. http://host/v1.
    #[arg(long, env = "PAC_BASE_URL")]
    pub base_url: Option<String>,

    #[arg(long)]
    pub model: Option<String>,

    /// Vocabulary JSON (token string to id) for the target model.
    #[arg(long)]
    pub vocab: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = TokenizerKind::Greedy)]
    pub tokenizer: TokenizerKind,

    /// Character standing for a leading space in vocabulary entries.
    #[arg(long)]
    pub space_marker: Option<String>,

    /// Replay files for --backend replay (repeatable).
    #[arg(long = "replay")]
    pub replay: Vec<PathBuf>,

    /// Reference model endpoint for the ref method.
    #[arg(long)]
    pub ref_base_url: Option<String>,

    #[arg(long)]
    pub ref_model: Option<String>,

    /// Replay file of reference-model scorings.
    #[arg(long)]
    pub ref_replay: Vec<PathBuf>,

    /// Maximum in-flight requests.
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,

    #[arg(long, default_value_t = 5)]
    pub max_topn: usize,

    #[arg(long, default_value_t = 5)]
    pub max_attempts: usize,

    /// Do not use echo scoring; recover logprobs through top-n probes.
    #[arg(long)]
    pub no_echo: bool,

    /// Append every new scoring to this replay file.
    #[arg(long)]
    pub cache: Option<PathBuf>,

    #[command(flatten)]
    pub synthetic: SyntheticArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SyntheticArgs {
    #[arg(long, default_value_t = 1000)]
    pub synthetic_vocab: usize,

    #[arg(long, default_value_t = 0.9)]
    pub lambda: f64,

    #[arg(long, default_value_t = 200)]
    pub members: usize,

    #[arg(long, default_value_t = 200)]
    pub nonmembers: usize,

    /// Base probability a continuation needs before it can be memorized.
    #[arg(long, default_value_t = 0.01)]
    pub recall_floor: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DetectorArgs {
    /// Percent of highest-probability tokens.
    #[arg(long, default_value_t = 5.0)]
    pub k1: f64,

    /// Percent of lowest-probability tokens.
    #[arg(long, default_value_t = 30.0)]
    pub k2: f64,

    /// Swaps per adjacent sample as a fraction of the word count.
    #[arg(long, default_value_t = 0.3)]
    pub m_ratio: f64,

    #[arg(long, default_value_t = 5)]
    pub n_adjacent: usize,

    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epsilon: f64,
}

impl DetectorArgs {
    pub fn config(&self, seed: u64) -> DetectorConfig {
        DetectorConfig {
            k1: self.k1,
            k2: self.k2,
            m_ratio: self.m_ratio,
            n_adjacent: self.n_adjacent,
            epsilon: self.epsilon,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MethodArgs {
    /// Methods, comma separated: pac, ppl, zlib, lower, ref, neighbor, mink.
    #[arg(long = "method", value_delimiter = ',', default_value = "pac", value_parser = parse_method)]
    pub methods: Vec<Method>,

    /// Percent of lowest-probability tokens for mink.
    #[arg(long, default_value_t = 20.0)]
    pub k: f64,

    /// Score whole samples or only their `span`.
    #[arg(long, value_enum, default_value_t = SpanMode::Full)]
    pub span: SpanMode,

    /// JSONL of {"id", "neighbors": [...]} for the neighbor method.
    #[arg(long)]
    pub neighbors: Option<PathBuf>,

    /// Word list (one per line) for generated neighbours.
    #[arg(long)]
    pub neighbor_vocab: Option<PathBuf>,

    #[arg(long, default_value_t = 5)]
    pub neighbor_count: usize,

    #[arg(long, default_value_t = 0.3)]
    pub neighbor_ratio: f64,
}

pub fn parse_method(s: &str) -> Result<Method, String> {
    s.trim().parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// Samples JSONL. Optional with --backend synthetic, which then scores
    /// the testbed samples.
    #[arg(long)]
    pub data: Option<PathBuf>,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    #[command(flatten)]
    pub backend: BackendArgs,

    #[command(flatten)]
    pub detector: DetectorArgs,

    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Score JSONL files (repeatable).
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,

    /// Labeled samples JSONL.
    #[arg(long)]
    pub data: PathBuf,

    /// Only these methods.
    #[arg(long = "method", value_delimiter = ',', value_parser = parse_method)]
    pub methods: Vec<Method>,

    /// Also report AUC per length bucket.
    #[arg(long)]
    pub by_length: bool,

    /// Write ROC curves as SVG.
    #[arg(long)]
    pub plot: Option<PathBuf>,

    /// Write one ROC CSV per method into this directory.
    #[arg(long)]
    pub roc_dir: Option<PathBuf>,

    /// Write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,

    #[arg(long)]
    pub data: PathBuf,

    #[arg(long, default_value = "pac", value_parser = parse_method)]
    pub method: Method,

    /// Calibration fractions, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FRACTIONS.to_vec())]
    pub fractions: Vec<f64>,

    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrackArgs {
    /// Samples JSONL whose texts are tracked.
    #[arg(long, required_unless_present = "text")]
    pub data: Option<PathBuf>,

    /// Literal text to track (repeatable).
    #[arg(long)]
    pub text: Vec<String>,

    /// Replay file to write.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,

    #[arg(long, default_value_t = -100.0, allow_negative_numbers = true)]
    pub bias_lo: f64,

    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    pub bias_hi: f64,

    /// Entries requested per probe.
    #[arg(long, default_value_t = 5)]
    pub topn: usize,

    #[arg(long, default_value_t = 64)]
    pub max_queries: usize,

    /// Compare against echo logprobs and report the largest error.
    #[arg(long)]
    pub verify: bool,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchCommand {
    /// Time-split raw records into members and non-members.
    Build(BenchBuildArgs),
    /// BLEU gate over original/rewrite pairs.
    Gate(BenchGateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct BenchBuildArgs {
    /// Raw records JSONL: id, text, post_time, last_activity_time.
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    /// Threads last active before this date are members.
    #[arg(long, default_value = "2017-01-01")]
    pub member_cutoff: String,

    /// Posts on or after this date are non-members.
    #[arg(long, default_value = "2023-05-01")]
    pub nonmember_start: String,

    #[arg(long)]
    pub strip_html: bool,

    #[arg(long)]
    pub dedup: bool,

    /// Drop records whose text matches this regex.
    #[arg(long)]
    pub exclude: Option<String>,

    /// Equalize member and non-member counts per length bucket.
    #[arg(long)]
    pub balance: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchGateArgs {
    /// JSONL of {"id", "ori", "syn"}.
    #[arg(long, required_unless_present = "examples")]
    pub pairs: Option<PathBuf>,

    /// Use the bundled example rewrites.
    #[arg(long)]
    pub examples: bool,

    #[arg(long, default_value_t = pacmia::bench::GATE_THRESHOLD)]
    pub threshold: f64,

    /// Accepted pairs JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ContaminationArgs {
    /// Score files, one report row each (repeatable).
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,

    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: f64,

    #[arg(long, default_value = "pac", value_parser = parse_method)]
    pub method: Method,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Directory for samples, scores, ROC plot and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long = "method", value_delimiter = ',', value_parser = parse_method)]
    pub methods: Vec<Method>,

    /// Write roc.svg into the output directory.
    #[arg(long, requires = "out")]
    pub plot: bool,

    #[command(flatten)]
    pub detector: DetectorArgs,

    #[command(flatten)]
    pub synthetic: SyntheticArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

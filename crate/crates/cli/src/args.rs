//! Command-line surface. Every numeric default here is also what `--help`
//! prints.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dialogbench_core::analysis::lm::{DEFAULT_ADD_K, DEFAULT_ORDER};
use dialogbench_core::analysis::shuffle::DEFAULT_PERMUTATIONS;
use dialogbench_core::analysis::topics::{DEFAULT_BOOTSTRAP, DEFAULT_TRANSITION_PERMUTATIONS, DEFAULT_WINDOW};
use dialogbench_core::candidates::{DEFAULT_NN_BIG_K, DEFAULT_NN_K, DEFAULT_PLAUSIBLE, DEFAULT_POPULAR};
use dialogbench_core::metrics::DEFAULT_DIALOG_K;

#[derive(Debug, Parser)]
#[command(name = "dialogbench", version, about = "Image-grounded dialog benchmark toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a dataset file parses and satisfies the schema.
    Validate(ValidateArgs),
    /// Dataset statistics, CSV tables and leading n-gram tries.
    Stats(StatsArgs),
    /// Build 100-option candidate sets for every question.
    Candidates(CandidatesArgs),
    /// Score candidate options with a non-neural baseline.
    Baseline(BaselineArgs),
    /// MRR, recall@k and mean rank of a score file.
    Rank(RankArgs),
    /// Dialog-level success and first-failure round.
    DialogEval(DialogEvalArgs),
    /// N-gram perplexity and the round-shuffle classification experiment.
    Lm(LmArgs),
    /// Topic continuity and transition statistics from annotations.
    Topics(TopicsArgs),
    /// Run the live two-person collection server.
    Serve(ServeArgs),
    /// Write a small synthetic corpus, word vectors, image features and
    /// topic annotations for trying the pipeline.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Stats(_) => "stats",
            Command::Candidates(_) => "candidates",
            Command::Baseline(_) => "baseline",
            Command::Rank(_) => "rank",
            Command::DialogEval(_) => "dialog-eval",
            Command::Lm(_) => "lm",
            Command::Topics(_) => "topics",
            Command::Serve(_) => "serve",
            Command::Synth(_) => "synth",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Validate(a) => &a.common,
            Command::Stats(a) => &a.common,
            Command::Candidates(a) => &a.common,
            Command::Baseline(a) => &a.common,
            Command::Rank(a) => &a.common,
            Command::DialogEval(a) => &a.common,
            Command::Lm(a) => &a.common,
            Command::Topics(a) => &a.common,
            Command::Serve(a) => &a.common,
            Command::Synth(a) => &a.common,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed from which all randomness derives.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads [default: available cores]. Outputs do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// TOML file of flag values; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ValidateArgs {
    /// Dataset file (.json or .jsonl).
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Depth of the leading n-gram tries.
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CandidatesArgs {
    /// Training dataset: source of plausible, popular and random answers.
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset whose questions get candidate sets [default: --data].
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Word-vector text file.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Plausible answers: answers of this many nearest training questions.
    #[arg(long, default_value_t = DEFAULT_PLAUSIBLE)]
    pub plausible: usize,
    /// Most frequent training answers included.
    #[arg(long, default_value_t = DEFAULT_POPULAR)]
    pub popular: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Training-answer frequency.
    Prior,
    /// Similarity to answers of the k nearest training questions.
    NnQ,
    /// NN-Q restricted to the k of K nearest questions with the closest images.
    NnQi,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Training dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset with the questions to score.
    #[arg(long)]
    pub eval: PathBuf,
    /// Candidate file [default: options embedded in --eval].
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Word-vector text file (nn-q, nn-qi).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Image feature JSONL (nn-qi).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Neighbors whose answers are averaged.
    #[arg(long, default_value_t = DEFAULT_NN_K)]
    pub k: usize,
    /// Question neighbors re-ranked by image distance (nn-qi).
    #[arg(long, default_value_t = DEFAULT_NN_BIG_K)]
    pub big_k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct OptionSource {
    /// Candidate file giving option counts and ground-truth positions.
    #[arg(long, conflicts_with = "data")]
    pub candidates: Option<PathBuf>,
    /// Dataset with embedded answer options, instead of --candidates.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct RankArgs {
    /// Score JSONL file.
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub source: OptionSource,
    /// Output directory [default: JSON report on stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct DialogEvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub source: OptionSource,
    /// A round succeeds when its ground truth ranks within k.
    #[arg(long, default_value_t = DEFAULT_DIALOG_K)]
    pub k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SmoothingKind {
    Interpolated,
    AddK,
    Mle,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct LmArgs {
    /// Training dataset for the language model.
    #[arg(long)]
    pub data: PathBuf,
    /// Dialogs to shuffle and score [default: --data].
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// N-gram order.
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    pub lm_order: usize,
    #[arg(long, value_enum, default_value_t = SmoothingKind::Interpolated)]
    pub smoothing: SmoothingKind,
    /// Pseudo-count for add-k and interpolated smoothing.
    #[arg(long, default_value_t = DEFAULT_ADD_K)]
    pub add_k: f64,
    /// Shuffled copies scored per dialog.
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TopicsArgs {
    /// Topic annotation JSON file.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Sliding window length for distinct-topic counts.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Bootstrap resamples for the spread of the means.
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    /// Dialogs per bootstrap resample [default: all].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Round shuffles for the transition baseline.
    #[arg(long, default_value_t = DEFAULT_TRANSITION_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Data directory for event logs, dialogs and discarded transcripts.
    #[arg(long)]
    pub out: PathBuf,
    /// Image manifest JSONL to enqueue at startup.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Seconds without a heartbeat before a worker counts as gone.
    #[arg(long, default_value_t = 120)]
    pub liveness_timeout: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Training dialogs.
    #[arg(long, default_value_t = 200)]
    pub dialogs: usize,
    /// Evaluation dialogs, on images disjoint from training.
    #[arg(long, default_value_t = 20)]
    pub eval_dialogs: usize,
    /// Word-vector width.
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    /// Image-feature width.
    #[arg(long, default_value_t = 16)]
    pub feature_dim: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

//! `marsim` — command-line front end for the Earth–Mars search simulator.
//!
//! One binary, subcommand per stage of a study: synthesize a corpus and a
//! query log, replay the log under a latency-mitigation policy, run the
//! high-recall review scenarios, evaluate caches and query suggestions,
//! and render the collected outcomes into plot-ready tables.
//!
//! Every run writes its outputs atomically plus a `manifest.json` naming
//! the command, flags, seed, and SHA-256 digests of all inputs and
//! outputs; rerunning a command with the same flags reproduces every
//! output byte for byte.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// A bad flag or flag combination: reported on stderr, exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UsageError {}

/// Shorthand for raising a [`UsageError`] through `anyhow`.
pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(
    name = "marsim",
    version,
    about = "Simulate interactive search between Earth and Mars",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: documents, topics, judgments, queries.
    GenCorpus(GenCorpusArgs),
    /// Synthesize a search session log over a corpus.
    GenLog(GenLogArgs),
    /// Replay a session log under a latency-mitigation policy.
    SessionsSim(SessionsSimArgs),
    /// Run a high-recall review campaign and emit its gain curves.
    RecallSim(RecallSimArgs),
    /// Sweep static-cache sizes and measure hit ratios on a log.
    CacheEval(CacheEvalArgs),
    /// Score a query-suggestion fixture against a log.
    SuggestEval(SuggestEvalArgs),
    /// Render collected simulation outcomes into summary tables.
    Report(ReportArgs),
}

#[derive(clap::Args, Serialize)]
pub struct GenCorpusArgs {
    /// Number of documents.
    #[arg(long, default_value_t = 2000)]
    pub docs: usize,
    /// Number of topics.
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    /// Fraction of documents relevant to each topic.
    #[arg(long, default_value_t = 0.05)]
    pub prevalence: f64,
    /// Fraction of low-quality (spam) documents.
    #[arg(long, default_value_t = 0.10)]
    pub spam_fraction: f64,
    /// Words per document.
    #[arg(long, default_value_t = 120)]
    pub words_per_doc: usize,
    /// Queries generated per topic for the query pool.
    #[arg(long, default_value_t = 30)]
    pub queries_per_topic: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(clap::Args, Serialize)]
pub struct GenLogArgs {
    /// Corpus file (JSON lines, one document per line).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Query pool (JSON). Defaults to queries.json next to the corpus.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Number of sessions.
    #[arg(long, default_value_t = 1000)]
    pub sessions: usize,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Every query and click waits a full round trip.
    Baseline,
    /// SERPs arrive with all linked pages; covered clicks are free.
    Serp,
    /// Pre-fetch the top-k index results of each query (coverage report).
    Topical,
    /// Match a suggestion fixture against later queries (coverage report).
    Suggest,
    /// SERP pre-fetching atop a static cache of high-quality pages.
    Cache,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Baseline => "baseline",
            Policy::Serp => "serp",
            Policy::Topical => "topical",
            Policy::Suggest => "suggest",
            Policy::Cache => "cache",
        }
    }
}

#[derive(clap::Args, Serialize)]
pub struct SessionsSimArgs {
    /// Session log (canonical JSON).
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, value_enum)]
    pub policy: Policy,
    /// Round-trip delay in minutes (8 near opposition, 48 near conjunction).
    #[arg(long)]
    pub rtt_min: f64,
    /// Pre-fetch depth (only with --policy topical).
    #[arg(long)]
    pub k: Option<usize>,
    /// Cache the top fraction of documents by quality score
    /// (only with --policy cache; needs --corpus).
    #[arg(long)]
    pub cache_fraction: Option<f64>,
    /// Cache exactly the docids listed in this file, one per line
    /// (only with --policy cache; alternative to --cache-fraction).
    #[arg(long)]
    pub cache_file: Option<PathBuf>,
    /// Corpus file (with --policy topical or --policy cache).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Suggestion fixture, JSON object of query -> suggested queries
    /// (only with --policy suggest).
    #[arg(long)]
    pub suggestions: Option<PathBuf>,
    /// Seed for quality-model training (cache policy).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Review on Earth: no link in the loop.
    Earth,
    /// Review on Earth's cadence with the link in the loop: one idle
    /// round trip per batch.
    EarthLat,
    /// Reviewer on Mars, empty cache: shipments sized to hide the lag
    /// after the first round trip.
    MarsNocache,
    /// Reviewer on Mars with a pre-positioned document cache.
    MarsCache,
}

#[derive(clap::Args, Serialize)]
pub struct RecallSimArgs {
    /// Corpus file (JSON lines).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Relevance judgments (four-column qrels text).
    #[arg(long)]
    pub qrels: PathBuf,
    /// Topic descriptors (JSON lines). Defaults to topics.jsonl next to
    /// the corpus.
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Round-trip delay in minutes.
    #[arg(long)]
    pub rtt_min: f64,
    /// File of docids pre-positioned on Mars, one per line
    /// (only with --scenario mars-cache).
    #[arg(long)]
    pub cache_seed: Option<PathBuf>,
    /// Pre-position the first N corpus documents instead of reading a
    /// file (only with --scenario mars-cache).
    #[arg(long)]
    pub cache_first: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop after this much virtual time (seconds).
    #[arg(long)]
    pub budget_s: Option<f64>,
    /// Stop at the first judgment reaching this recall.
    #[arg(long)]
    pub recall_target: Option<f64>,
    /// Override the shipping runway (documents kept ahead of the
    /// reviewer). Default: one round trip of minimum reading time.
    #[arg(long)]
    pub watermark: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(clap::Args, Serialize)]
pub struct CacheEvalArgs {
    /// Session log (canonical JSON).
    #[arg(long)]
    pub log: PathBuf,
    /// Corpus file (JSON lines); quality labels train the cache ranker.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Cache fractions to sweep, comma-separated.
    #[arg(long, default_value = "0.01,0.05,0.1,0.2")]
    pub fractions: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(clap::Args, Serialize)]
pub struct SuggestEvalArgs {
    /// Session log (canonical JSON).
    #[arg(long)]
    pub log: PathBuf,
    /// Suggestion fixture, JSON object of query -> suggested queries.
    #[arg(long)]
    pub suggestions: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Tsv,
}

#[derive(clap::Args, Serialize)]
pub struct ReportArgs {
    /// Directory holding outcomes.json files (searched at the top level
    /// and one level of subdirectories).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output directory. Defaults to report/ under --in.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

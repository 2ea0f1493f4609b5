//! `qax`: translate SQuAD-format datasets, debug single alignments, inspect
//! reports, score predictions and manage the provider cache.
//!
//! Exit codes: 0 success, 1 fatal error, 2 finished with failed records.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use qax_core::providers::{ENV_API_KEY, ENV_EMBED_URL, ENV_TRANSLATE_URL};

#[derive(Debug, Parser)]
#[command(
    name = "qax",
    version,
    about = "Translate extractive QA datasets and re-align answer spans"
)]
pub struct Cli {
    /// Read flag values from a `key = value` file; flags given on the
    /// command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Translate a dataset, re-align every answer, filter and downsample.
    TranslateDataset(TranslateArgs),
    /// Align one answer inside one context and print the result as JSON.
    Align(AlignArgs),
    /// Print the similarity histogram and counts of a report or dataset.
    Stats(StatsArgs),
    /// Score predictions against a gold dataset with EM and F1.
    Evaluate(EvaluateArgs),
    /// Inspect or clear the provider cache.
    #[command(subcommand)]
    Cache(CacheCmd),
}

#[derive(Debug, Args)]
pub struct ScoringArgs {
    /// Weight of the embedding cosine term.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub w1: f64,
    /// Weight of the LCS term; w1 + w2 must equal 1.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub w2: f64,
    /// Extra words a candidate window may have beyond the answer length.
    #[arg(long, default_value_t = 3)]
    pub max_stride: usize,
    /// Window selection rule: lexicographic or paper_literal.
    #[arg(long, default_value = "lexicographic")]
    pub update_rule: String,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Embedding provider: test (local, deterministic) or http.
    #[arg(long, default_value = "test", value_parser = ["test", "http"])]
    pub embedder: String,
    /// Embedding endpoint for the http embedder.
    #[arg(long, env = ENV_EMBED_URL, default_value = "")]
    pub embed_url: String,
    /// Expected embedding dimension; unset trusts the provider.
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    /// Translation provider: identity (no-op) or http.
    #[arg(long, default_value = "identity", value_parser = ["identity", "http"])]
    pub translator: String,
    /// Translation endpoint for the http translator.
    #[arg(long, env = ENV_TRANSLATE_URL, default_value = "")]
    pub translate_url: String,
    /// Bearer token sent to HTTP providers.
    #[arg(long, env = ENV_API_KEY, hide_env_values = true)]
    pub api_key: Option<String>,
    #[arg(long, default_value = "en")]
    pub source_lang: String,
    #[arg(long, default_value = "am")]
    pub target_lang: String,
    /// Maximum concurrent provider requests.
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
    /// Retries after the first attempt on 429, 5xx and transport errors.
    #[arg(long, default_value_t = 5)]
    pub retry_max: u32,
    /// Base backoff delay; attempt k waits base * 2^k * U[0.5, 1).
    #[arg(long, default_value_t = 250)]
    pub retry_base_ms: u64,
    /// Persistent cache for translations and embeddings.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Input dataset (SQuAD 2.0 JSON).
    pub input: PathBuf,
    /// Output dataset; the report goes to OUTPUT.report.json.
    pub output: PathBuf,
    /// Which unanswerable keep count applies: train or dev.
    #[arg(long, value_parser = ["train", "dev"])]
    pub split: Option<String>,
    /// Minimum similarity for an aligned answer to be kept (inclusive).
    #[arg(long, default_value_t = 0.6)]
    pub similarity_threshold: f64,
    /// Unanswerable questions kept from a train split.
    #[arg(long, default_value_t = 6000)]
    pub unanswerable_keep_train: usize,
    /// Unanswerable questions kept from a dev split.
    #[arg(long, default_value_t = 700)]
    pub unanswerable_keep_dev: usize,
    /// Seed for unanswerable downsampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Journal file; an interrupted run resumes from it.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// No progress on stderr.
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub embed: EmbedArgs,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Translated context to search.
    #[arg(long)]
    pub context: String,
    /// Translated answer to locate.
    #[arg(long)]
    pub answer: String,
    /// Relative character position of the answer in the original context.
    #[arg(long, default_value_t = 0.0)]
    pub rel_pos: f64,
    #[command(flatten)]
    pub scoring: ScoringArgs,
    #[command(flatten)]
    pub embed: EmbedArgs,
    /// Bearer token sent to HTTP providers.
    #[arg(long, env = ENV_API_KEY, hide_env_values = true)]
    pub api_key: Option<String>,
    /// Persistent cache for embeddings.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// A pipeline report or an aligned dataset.
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// JSON object mapping question id to predicted answer text.
    pub predictions: PathBuf,
    /// Gold dataset.
    pub gold: PathBuf,
    /// Print the summary as JSON, including per-question scores.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum CacheCmd {
    /// Print entry counts and size.
    Inspect(CacheArgs),
    /// Delete every cache entry.
    Clear(CacheArgs),
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    /// Cache directory used by earlier runs.
    #[arg(long)]
    pub cache_dir: PathBuf,
}

/// Parses arguments, folding in the config file when one is given.
fn parse(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    let mut cmd = Cli::command();
    let matches = cmd.try_get_matches_from_mut(argv.clone())?;
    let Some(path) = matches.get_one::<PathBuf>("config").cloned() else {
        return Cli::from_arg_matches(&matches);
    };
    cmd.build();
    // walk down to the innermost subcommand actually invoked
    let (mut sub, mut sub_matches) = (&cmd, &matches);
    while let Some((name, m)) = sub_matches.subcommand() {
        sub = sub
            .find_subcommand(name)
            .expect("matched subcommand exists");
        sub_matches = m;
    }
    let extra = config::layered_args(&path, sub, sub_matches).map_err(|e| {
        Cli::command().error(clap::error::ErrorKind::InvalidValue, format!("{e:#}"))
    })?;
    let mut full = argv;
    full.extend(extra);
    let matches = Cli::command().try_get_matches_from(full)?;
    Cli::from_arg_matches(&matches)
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! `styleval`: train the evaluation suite, score style-transfer outputs and
//! check metrics against human judgments.
//!
//! ```text
//! styleval train-classifier --x0 neg.txt --x1 pos.txt --out clf.json
//! styleval train-lm --x0 neg.txt --x1 pos.txt --out lm.json
//! styleval build-idf --x0 neg.txt --x1 pos.txt --out idf.json
//! styleval eval --transfer out.jsonl --classifier clf.json --lm lm.json \
//!     --idf idf.json --embeddings glove.txt --out report.json
//! ```
//!
//! Failures print one line naming the stage that failed and exit with 1.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use styleval::aggregate::{GmParams, Granularity};

mod commands;
mod config;
mod output;

#[derive(Debug, Parser)]
#[command(name = "styleval", version, about = "Unsupervised metrics for textual style transfer")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; explicit flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report per-record scores (sentence) or only corpus scores (corpus).
    #[arg(long, global = true, value_name = "sentence|corpus")]
    pub granularity: Option<Granularity>,
    /// GM thresholds as t1,t2,t3,t4 (default 63,71,97,-37).
    #[arg(long, global = true, value_name = "T1,T2,T3,T4", allow_hyphen_values = true)]
    pub params: Option<GmParams>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Sentences of style 0, one per line.
    #[arg(long, value_name = "FILE")]
    pub x0: Option<PathBuf>,
    /// Sentences of style 1, one per line.
    #[arg(long, value_name = "FILE")]
    pub x1: Option<PathBuf>,
    /// Name of style 0 (default: file stem of --x0).
    #[arg(long)]
    pub label0: Option<String>,
    /// Name of style 1 (default: file stem of --x1).
    #[arg(long)]
    pub label1: Option<String>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long, value_name = "FILE")]
    pub classifier: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub lm: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub idf: Option<PathBuf>,
    /// Whitespace-separated text embeddings: a word then its values.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Embedding dimension (default: read from the first line).
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the n-gram logistic-regression style classifier.
    TrainClassifier {
        #[command(flatten)]
        corpora: CorpusArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        l2: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        dev_fraction: Option<f64>,
    },
    /// Train the Kneser-Ney language model on both corpora.
    TrainLm {
        #[command(flatten)]
        corpora: CorpusArgs,
        #[arg(long)]
        order: Option<usize>,
        /// Words seen fewer times become <unk>.
        #[arg(long)]
        min_count: Option<u64>,
    },
    /// Compute sentence-level idf weights over both corpora.
    BuildIdf {
        #[command(flatten)]
        corpora: CorpusArgs,
    },
    /// Score one transfer set and write a metric report.
    Eval {
        /// JSON-lines transfer records.
        #[arg(long, value_name = "FILE")]
        transfer: Option<PathBuf>,
        #[command(flatten)]
        suite: SuiteArgs,
    },
    /// Fit GM thresholds to pairwise preferences.
    FitGm {
        /// JSON-lines preference pairs.
        #[arg(long, value_name = "FILE")]
        pairs: Option<PathBuf>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        holdout_fraction: Option<f64>,
    },
    /// Score per-checkpoint transfer sets and pick the best one by GM.
    Select {
        /// Transfer files, one per checkpoint.
        #[arg(long = "transfer", value_name = "FILE", num_args = 1..)]
        transfers: Vec<PathBuf>,
        #[command(flatten)]
        suite: SuiteArgs,
        /// Where to write the chosen checkpoint and its report as JSON.
        #[arg(long, value_name = "FILE")]
        chosen: Option<PathBuf>,
    },
    /// Agreement statistics between metric reports and human annotations.
    Validate {
        /// JSON-lines human annotations.
        #[arg(long, value_name = "FILE")]
        annotations: Option<PathBuf>,
        /// Sentence-granularity reports whose record ids the annotations use.
        #[arg(long = "report", value_name = "FILE", num_args = 1..)]
        reports: Vec<PathBuf>,
        /// JSON-lines preference pairs with precomputed metric triples.
        #[arg(long, value_name = "FILE")]
        pairs: Option<PathBuf>,
    },
    /// Corpus BLEU of candidates against one reference each.
    Bleu {
        #[arg(long, value_name = "FILE")]
        candidates: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        references: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace(['\n', '\r'], " ");
            eprintln!("styleval: error: {msg}");
            ExitCode::FAILURE
        }
    }
}

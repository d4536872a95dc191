//! `earthvl`: QA generation, augmentation, statistics, toy training and
//! evaluation over land-cover masks.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use earthvl_core::Error;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "earthvl", version, about = "Land-cover VQA toolkit")]
pub struct Cli {
    /// Run configuration (JSON). EARTHVL_SEED overrides its seed.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate QA pairs for every mask in a manifest.
    GenQa(GenQaArgs),
    /// Flip or rotate masks and rewrite direction-sensitive answers.
    Augment(AugmentArgs),
    /// Answer distribution report for a QA corpus.
    Stats(StatsArgs),
    /// Train the toy model on synthetic building-counting data.
    TrainToy(TrainToyArgs),
    /// Score multiple-choice predictions (accuracy and counting RMSE).
    EvalMc(EvalArgs),
    /// Score open-ended predictions (BLEU, ROUGE-L, CIDEr).
    EvalOpen(EvalArgs),
    /// Write synthetic masks, their inventory and a manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct GenQaArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output JSON-lines file.
    #[arg(long)]
    pub out: PathBuf,
    /// Only entries of this split.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub qa: PathBuf,
    /// Output directory for masks, qa.jsonl and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Transforms apply in the order hflip, vflip, rot90, combined with
    /// those enabled in the config.
    #[arg(long)]
    pub hflip: bool,
    #[arg(long)]
    pub vflip: bool,
    /// Quarter turn clockwise.
    #[arg(long)]
    pub rot90: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub qa: PathBuf,
    /// JSON report; the summary is printed either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// Output directory for checkpoint.json, train_log.jsonl, test_qa.jsonl
    /// and predictions.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 50)]
    pub test_samples: usize,
    /// Overrides train.epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides loss.alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Overrides loss.gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Overrides loss.variant: separated or shared.
    #[arg(long)]
    pub variant: Option<String>,
    /// Use the small model preset instead of config.model.
    #[arg(long)]
    pub small: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth QA JSON lines.
    #[arg(long)]
    pub qa: PathBuf,
    /// Predictions as JSON lines of {qid, answer}.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// mixed, cross, village, roads or blobs.
    #[arg(long, default_value = "mixed")]
    pub preset: String,
    /// Scene spec as JSON; replaces the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Split written to the manifest.
    #[arg(long, default_value = "train")]
    pub split: String,
}

/// Failure record written to stderr as one JSON line.
#[derive(Debug, serde::Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    kind: &'a str,
    message: String,
    exit_code: u8,
}

fn report(kind: &str, message: String, code: u8) -> ExitCode {
    let rec = ErrorRecord { error: "earthvl", kind, message, exit_code: code };
    eprintln!("{}", serde_json::to_string(&rec).expect("error record serializes"));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("usage", e.to_string().trim_end().to_string(), EXIT_VALIDATION),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME };
            report(e.kind(), e.to_string(), code)
        }
    }
}

pub type CliResult<T = ()> = Result<T, Error>;

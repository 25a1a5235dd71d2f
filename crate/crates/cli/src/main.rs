//! `voclab`: one subcommand per pipeline stage.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation: exit status 2.
    #[error("{0}")]
    Usage(String),
    /// Inputs or settings that fail validation: exit status 1.
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "voclab", version, about = "Child vocalization maturity pipeline", propagate_version = true)]
struct Cli {
    /// Seed for every random choice (default 0).
    #[arg(long, global = true)]
    seed: Option<String>,
    /// TOML file with a `seed` key and one table per subcommand; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build Cleaned/Uncleaned label tiers from crowdsourced annotations.
    Aggregate(AggregateArgs),
    /// Cap every class at a multiple of the anchor class.
    Downsample(DownsampleArgs),
    /// Child-disjoint train/dev/test split.
    Split(SplitArgs),
    /// Decode, mix down, resample and pad clips into a clip file.
    Prep(PrepArgs),
    /// Log-mel summary features for every prepared clip.
    Featurize(FeaturizeArgs),
    /// Train the classification head.
    Train(TrainArgs),
    /// Score clips with a trained model.
    Predict(PredictArgs),
    /// UAR, per-class recall and AUC, stratified tables and agreement.
    Evaluate(EvaluateArgs),
    /// Weighted kappa between annotators and between model and annotators.
    Agreement(AgreementArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Cross-set comparison table and per-report summaries.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Extra annotation logs (e.g. the annotation service store).
    #[arg(long = "annotations")]
    pub annotations: Vec<PathBuf>,
    /// Strong-majority threshold (default 2/3).
    #[arg(long)]
    pub threshold: Option<String>,
    #[arg(long)]
    pub min_annotations: Option<String>,
    /// exclude | fixed_priority
    #[arg(long)]
    pub tie_policy: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DownsampleArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Tier file from `aggregate`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// cleaned | uncleaned
    #[arg(long)]
    pub tier: Option<String>,
    #[arg(long)]
    pub anchor_class: Option<String>,
    #[arg(long)]
    pub multiplier: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub tier: Option<String>,
    /// Train,dev,test shares, e.g. 0.8,0.1,0.1 or 8/10,1/10,1/10.
    #[arg(long)]
    pub ratios: Option<String>,
    #[arg(long)]
    pub age_bucket_months: Option<String>,
    /// Comma-separated: age_bucket, language (empty for none).
    #[arg(long)]
    pub stratify: Option<String>,
    /// Take folds from the manifest's split records instead.
    #[arg(long)]
    pub use_manifest_split: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PrepArgs {
    #[arg(long, alias = "in")]
    pub manifest: Option<PathBuf>,
    /// Only prepare clips in this tier file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub tier: Option<String>,
    /// Base directory for relative audio URIs (default: the manifest's).
    #[arg(long)]
    pub audio_root: Option<PathBuf>,
    /// error | crop
    #[arg(long)]
    pub on_overflow: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FeaturizeArgs {
    /// Clip file from `prep`.
    #[arg(long)]
    pub clips: Option<PathBuf>,
    #[arg(long)]
    pub n_mels: Option<String>,
    #[arg(long)]
    pub window_ms: Option<String>,
    #[arg(long)]
    pub hop_ms: Option<String>,
    #[arg(long)]
    pub fmin_hz: Option<String>,
    #[arg(long)]
    pub fmax_hz: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub tier: Option<String>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub momentum: Option<String>,
    /// 0 trains a linear softmax head.
    #[arg(long)]
    pub hidden_units: Option<String>,
    /// sgd_momentum | adaptive_moments
    #[arg(long)]
    pub optimizer: Option<String>,
    /// true | false
    #[arg(long)]
    pub standardize: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Restrict to one fold of this split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub fold: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Reference labels (tier file).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub tier: Option<String>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub fold: Option<String>,
    /// Comma-separated: environment, language, corpus_id, age_bucket.
    #[arg(long)]
    pub strata: Option<String>,
    #[arg(long)]
    pub age_bucket_months: Option<String>,
    #[arg(long)]
    pub resamples: Option<String>,
    #[arg(long)]
    pub level: Option<String>,
    /// 5x5 disagreement-cost file.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub min_pairs: Option<String>,
    /// grouped | pooled
    #[arg(long)]
    pub agreement_mode: Option<String>,
    #[arg(long)]
    pub dataset_id: Option<String>,
    #[arg(long)]
    pub finetune_set: Option<String>,
    /// Structured report (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Human-readable report.
    #[arg(long)]
    pub markdown: Option<PathBuf>,
}

#[derive(Args)]
pub struct AgreementArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restrict to clips in this tier file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub tier: Option<String>,
    /// Adds model-vs-annotator kappa.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub resamples: Option<String>,
    #[arg(long)]
    pub level: Option<String>,
    #[arg(long)]
    pub min_pairs: Option<String>,
    #[arg(long)]
    pub agreement_mode: Option<String>,
    /// Keep only clips with at most this many annotations.
    #[arg(long)]
    pub max_annotations: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub gold_manifest: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    /// 0 picks a free port.
    #[arg(long)]
    pub port: Option<String>,
    #[arg(long)]
    pub target_per_clip: Option<String>,
    #[arg(long)]
    pub continue_past_target: bool,
    #[arg(long)]
    pub qual_n: Option<String>,
    #[arg(long)]
    pub qual_threshold: Option<String>,
    #[arg(long)]
    pub audio_root: Option<PathBuf>,
    /// Require this value in the x-voclab-key header.
    #[arg(long)]
    pub shared_secret: Option<String>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Evaluation reports (JSON) to combine.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// markdown | json
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("VOCLAB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Invalid(format!("VOCLAB_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    Ok(())
}

fn load_config(path: Option<&PathBuf>) -> Result<Option<toml::Table>, CliError> {
    let Some(p) = path else { return Ok(None) };
    let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.clone(), e))?;
    text.parse::<toml::Table>()
        .map(Some)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let config = load_config(cli.config.as_ref())?;
    let seed = match (&cli.seed, config.as_ref().and_then(|c| c.get("seed"))) {
        (Some(s), _) => s
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid value `{s}` for --seed")))?,
        (None, Some(v)) => v
            .as_integer()
            .and_then(|i| u64::try_from(i).ok())
            .ok_or_else(|| CliError::Invalid("config `seed` must be a non-negative integer".into()))?,
        (None, None) => 0,
    };
    let cfg = config.as_ref();
    match cli.command {
        Command::Aggregate(a) => commands::aggregate(a, cfg, seed),
        Command::Downsample(a) => commands::downsample(a, cfg, seed),
        Command::Split(a) => commands::split(a, cfg, seed),
        Command::Prep(a) => commands::prep(a, cfg, seed),
        Command::Featurize(a) => commands::featurize(a, cfg, seed),
        Command::Train(a) => commands::train(a, cfg, seed),
        Command::Predict(a) => commands::predict(a, cfg, seed),
        Command::Evaluate(a) => commands::evaluate(a, cfg, seed),
        Command::Agreement(a) => commands::agreement(a, cfg, seed),
        Command::Serve(a) => commands::serve(a, cfg, seed),
        Command::Report(a) => commands::report(a, cfg, seed),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_target(false)
        .without_time()
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("\nUsage: voclab [--seed N] [--config FILE] <COMMAND> [OPTIONS]\nRun `voclab <COMMAND> --help` for the options of one stage.");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "latdiff", version, about = "Search a generator's latent space for inputs two classifiers disagree on")]
pub struct Cli {
    /// Worker threads for evaluation and filtering (default: all cores).
    #[arg(long, global = true, env = "LATDIFF_WORKERS")]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the search and write a new archive.
    Generate(GenerateArgs),
    /// Apply duplicate, discriminator and SSIM filtering to an archive.
    Filter(FilterArgs),
    /// List records whose images are byte-identical to an earlier record.
    Dedup(ArchiveArg),
    /// Diversity, run-stability and validity statistics of an archive.
    Metrics(MetricsArgs),
    /// Train or evaluate a per-input model selector.
    #[command(subcommand)]
    Select(SelectCommand),
    /// Verify an archive against its manifest and summarize it.
    Report(ArchiveArg),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["testbed", "generator"])))]
#[command(group(ArgGroup::new("budget").args(["budget_evals", "budget_seconds"])))]
pub struct GenerateArgs {
    /// Use the built-in analytic generator and classifier pair.
    #[arg(long)]
    pub testbed: bool,
    /// Generator PFN directory.
    #[arg(long, requires_all = ["model_a", "model_b"])]
    pub generator: Option<PathBuf>,
    #[arg(long)]
    pub model_a: Option<PathBuf>,
    #[arg(long)]
    pub model_b: Option<PathBuf>,
    /// Discriminator PFN directory, used later by `filter`.
    #[arg(long, conflicts_with = "testbed")]
    pub discriminator: Option<PathBuf>,
    /// Feature-extractor PFN directory, used later by `metrics` and `select`.
    #[arg(long, conflicts_with = "testbed")]
    pub extractor: Option<PathBuf>,
    /// Archive directory to create.
    #[arg(long, short, env = "LATDIFF_OUTPUT_DIR")]
    pub out: PathBuf,
    /// Stop each run after this many evaluations (default 10000).
    #[arg(long)]
    pub budget_evals: Option<u64>,
    /// Stop each run once this many seconds have elapsed, checked between generations.
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent repetitions; run r uses seed + r.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value_t = 100)]
    pub population: usize,
    /// Testbed latent dimension; PFN generators define their own.
    #[arg(long, default_value_t = 100)]
    pub latent_dim: usize,
    /// Testbed image side in pixels.
    #[arg(long, default_value_t = 16)]
    pub testbed_side: usize,
    #[arg(long, default_value_t = 0.9)]
    pub crossover_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mutation_rate: f64,
    #[arg(long, default_value_t = 15.0)]
    pub eta_c: f64,
    #[arg(long, default_value_t = 20.0)]
    pub eta_m: f64,
    #[arg(long, default_value_t = 8)]
    pub cluster_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub min_cluster_size: usize,
    /// Default discriminator threshold stored for `filter`.
    #[arg(long, default_value_t = 0.5)]
    pub disc_threshold: f64,
    /// Default SSIM threshold stored for `filter`.
    #[arg(long, default_value_t = 0.40)]
    pub ssim_threshold: f64,
}

#[derive(Debug, Args)]
pub struct ArchiveArg {
    /// Archive directory written by `generate`.
    #[arg(long, short)]
    pub archive: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub archive: ArchiveArg,
    /// Directory of reference PGM/PPM images for the SSIM stage.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Override the campaign's discriminator threshold.
    #[arg(long)]
    pub disc_threshold: Option<f64>,
    /// Override the campaign's SSIM threshold.
    #[arg(long, conflicts_with = "no_ssim")]
    pub ssim_threshold: Option<f64>,
    #[arg(long)]
    pub no_ssim: bool,
    #[arg(long)]
    pub no_discriminator: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub archive: ArchiveArg,
    /// Images per diversity subsample.
    #[arg(long, default_value_t = 100)]
    pub sample: usize,
    #[arg(long, default_value_t = 30)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Triggering inputs known before the campaign, for the improvement ratio.
    #[arg(long)]
    pub initial_count: Option<u64>,
    /// Restrict diversity to records the filter kept.
    #[arg(long)]
    pub kept_only: bool,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap_resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
}

#[derive(Debug, Subcommand)]
pub enum SelectCommand {
    /// Build the labeled dataset, split it and train a selector.
    Train(SelectTrainArgs),
    /// Score a trained selector on its held-out split.
    Eval(SelectEvalArgs),
}

#[derive(Debug, Args)]
pub struct SelectTrainArgs {
    #[command(flatten)]
    pub archive: ArchiveArg,
    /// Ground-truth labels, one `record_id<TAB>label` per line.
    #[arg(long)]
    pub truth: PathBuf,
    /// Selector file to write (default: <archive>/selector.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 700)]
    pub train: usize,
    #[arg(long, default_value_t = 200)]
    pub test: usize,
    /// Neighbours consulted per prediction.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use only records the filter kept.
    #[arg(long)]
    pub kept_only: bool,
}

#[derive(Debug, Args)]
pub struct SelectEvalArgs {
    #[command(flatten)]
    pub archive: ArchiveArg,
    #[arg(long)]
    pub truth: PathBuf,
    /// Selector file (default: <archive>/selector.json).
    #[arg(long)]
    pub selector: Option<PathBuf>,
}

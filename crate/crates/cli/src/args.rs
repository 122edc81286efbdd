use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mixmatch", version, about = "Hybrid mix-and-match recommendation engine")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate, filter, or synthesize an embedding store.
    Ingest(IngestArgs),
    /// Train the matching model and write a checkpoint.
    Train(TrainArgs),
    /// Answer one recommendation request as JSON.
    Recommend(RecommendArgs),
    /// Ground a query's generated candidates onto retrieved items.
    Fuse(FuseArgs),
    /// Retrieved fraction across a threshold grid, averaged over queries.
    Sweep(SweepArgs),
    /// Weighted rating proportions, Likert scores, and criterion weights.
    Evaluate(EvaluateArgs),
    /// Reference loss kernels.
    Kernels {
        #[command(subcommand)]
        command: KernelsCommand,
    },
    /// Run the HTTP recommendation service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Existing EMB1 store to validate or filter.
    #[arg(long, conflicts_with = "synthetic")]
    pub store: Option<PathBuf>,
    /// Generate a seeded two-cluster store instead of reading one.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, requires = "synthetic")]
    pub tops: Option<usize>,
    #[arg(long, requires = "synthetic")]
    pub bottoms: Option<usize>,
    #[arg(long, requires = "synthetic")]
    pub queries: Option<usize>,
    /// Write the withheld compatible pairs of a synthetic store as CSV.
    #[arg(long, requires = "synthetic")]
    pub heldout_out: Option<PathBuf>,
    #[arg(long, requires = "max_count")]
    pub min_count: Option<usize>,
    #[arg(long, requires = "min_count")]
    pub max_count: Option<usize>,
    /// Also write pseudo-generated candidates (GEN1) to this path.
    #[arg(long)]
    pub pseudo_candidates: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f32>,
    #[arg(long)]
    pub per_query: Option<usize>,
    /// Output EMB1 path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f32>,
    #[arg(long)]
    pub l2_reg: Option<f32>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Full request as JSON (a path, or `-` for standard input).
    #[arg(long, conflicts_with_all = ["query_id", "query_feature", "k", "threshold", "include_generated"])]
    pub request: Option<PathBuf>,
    #[arg(long, conflicts_with = "query_feature")]
    pub query_id: Option<String>,
    /// Inline query feature, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub query_feature: Option<Vec<f32>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f32>,
    #[arg(long)]
    pub include_generated: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub query_id: String,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f32>,
    /// Drop candidates that ground to an already used item.
    #[arg(long)]
    pub dedup: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub candidates: PathBuf,
    /// Threshold grid as `lo:hi:step`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Retrieved-list length per query.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Recompute the published per-system weighted rows and scores.
    #[arg(long, conflicts_with_all = ["ratings", "ballots"])]
    pub table1_fixture: bool,
    /// 4×5 rating matrix CSV.
    #[arg(long, conflicts_with = "ballots")]
    pub ratings: Option<PathBuf>,
    /// Ballot CSV with `rater_id,criterion,level` rows.
    #[arg(long)]
    pub ballots: Option<PathBuf>,
    /// Criterion weights `a,b,c,d`.
    #[arg(long, value_delimiter = ',', conflicts_with = "expert_scores")]
    pub weights: Option<Vec<f32>>,
    /// Expert score CSV with `expert,d1,d2,d3,d4` rows.
    #[arg(long)]
    pub expert_scores: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum KernelsCommand {
    /// Compare every kernel with its loop oracle on random instances.
    Selfcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Listen address.
    #[arg(long)]
    pub bind: Option<String>,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ubiqtree",
    version,
    about = "SHAP attributions with uncertainty decomposition for bagged tree ensembles"
)]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "UBIQTREE_THREADS")]
    pub threads: Option<usize>,

    /// Suppress progress and summary output.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a bagged forest from a CSV and write the model JSON.
    Train(TrainArgs),
    /// Explain instances with uncertainty-aware SHAP and write a report JSON.
    Explain(ExplainArgs),
    /// Print the top features of a report as a table.
    Report(ReportArgs),
    /// Run the invariant suite on synthetic data.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Oversample {
    Simple,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,

    /// Label column; defaults to a column named label, target, class or y.
    #[arg(long)]
    pub label: Option<String>,

    #[arg(long, default_value_t = 100)]
    pub trees: usize,

    #[arg(long)]
    pub max_depth: Option<usize>,

    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,

    /// Features tried per split; default ceil(sqrt(features)).
    #[arg(long)]
    pub mtry: Option<usize>,

    /// Hold out this fraction, stratified by class, and report its macro-F1.
    #[arg(long)]
    pub test_fraction: Option<f64>,

    /// Columns to remove before training (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,

    /// Balance the training split by duplicating minority rows.
    #[arg(long, value_enum)]
    pub oversample: Option<Oversample>,

    /// Training rows stored with the model as the SHAP background.
    #[arg(long, default_value_t = 256)]
    pub background_size: usize,

    /// Model JSON destination.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RouteOnArg {
    Epistemic,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EntropySourceArg {
    SampleSummaries,
    PooledTrees,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// CSV holding the instances; columns are matched to the model by name.
    #[arg(long)]
    pub data: PathBuf,

    /// Explain only this data row (0-based); otherwise every row in batch mode.
    #[arg(long)]
    pub instance_index: Option<usize>,

    /// Background CSV replacing the rows stored in the model.
    #[arg(long)]
    pub background: Option<PathBuf>,

    /// Number of sub-ensemble samples S.
    #[arg(long, default_value_t = 500)]
    pub samples: usize,

    /// Dirichlet concentration.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,

    /// Softmax temperature on out-of-bag accuracy.
    #[arg(long, default_value_t = 5.0)]
    pub beta: f64,

    /// Trees per sub-ensemble; default the forest size.
    #[arg(long)]
    pub subsize: Option<usize>,

    /// Belief-structure bins; default ceil(sqrt(trees)).
    #[arg(long)]
    pub bins: Option<usize>,

    /// Conflict search grid points per bin.
    #[arg(long, default_value_t = 4)]
    pub conflict_refinement: usize,

    /// Summarize each sample by mean + variance / 2 instead of the mean.
    #[arg(long)]
    pub use_adjusted: bool,

    #[arg(long, value_enum, default_value_t = RouteOnArg::Epistemic)]
    pub route_on: RouteOnArg,

    #[arg(long, value_enum, default_value_t = EntropySourceArg::SampleSummaries)]
    pub entropy_source: EntropySourceArg,

    /// Write bar and distribution CSVs into this directory.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,

    /// Store sub-ensembles and per-tree SHAP values per instance here.
    #[arg(long, conflicts_with = "from_intermediate")]
    pub save_intermediate: Option<PathBuf>,

    /// Rebuild the report from intermediates stored by --save-intermediate.
    #[arg(long)]
    pub from_intermediate: Option<PathBuf>,

    /// Recorded verbatim in the report provenance.
    #[arg(long)]
    pub timestamp: Option<String>,

    /// Report JSON destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: PathBuf,

    /// Features shown per class.
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Sub-ensemble samples per explained instance.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

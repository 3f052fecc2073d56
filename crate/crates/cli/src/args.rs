use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "treerules",
    version,
    about = "Distill tree ensembles into readable rules"
)]
pub struct Cli {
    /// Configuration file of key=value lines; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output style for tables.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Pretty,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Relative,
    Absolute,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the synthetic two-player team dataset.
    Generate(GenerateArgs),
    /// Train a random forest and write its node tables.
    Train(TrainArgs),
    /// Extract path conditions (or leaf rules) from a trained model.
    Extract(ExtractArgs),
    /// Assign outcomes to conditions and measure length, frequency and error.
    Measure(MeasureArgs),
    /// Remove irrelevant terms from rule conditions.
    Prune(PruneArgs),
    /// Select a compact subset of rules.
    Select(SelectArgs),
    /// Mine frequent variable interactions from rules.
    Mine(MineArgs),
    /// Build an ordered rule list.
    Stel(StelArgs),
    /// Apply a rule list to a dataset.
    Predict(PredictArgs),
    /// Compare the rule list with a single tree over repeated random splits.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Training data CSV (header row; last column is the target unless --target is set).
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Name of the target column.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ForestArgs {
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Uniform penalty coefficient in (0, 1] for a regularized forest.
    #[arg(long)]
    pub coef_reg: Option<f64>,
    /// Grow every tree on all rows instead of a bootstrap sample.
    #[arg(long)]
    pub no_bootstrap: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    /// Players marked Y in every row.
    #[arg(long, default_value_t = 10)]
    pub active: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Node-table CSV written by `train` or external tooling.
    #[arg(long)]
    pub model: PathBuf,
    /// Longest path to follow, counting the root as depth 1; -1 for no limit.
    #[arg(long, allow_negative_numbers = true)]
    pub max_depth: Option<i64>,
    /// Write one rule per leaf with the leaf prediction instead of conditions.
    #[arg(long)]
    pub leaf_rules: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct MeasureArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Condition or rule table.
    #[arg(long)]
    pub input: PathBuf,
    /// Keep the outcomes in the input's `pred` column instead of assigning new ones.
    #[arg(long)]
    pub keep_pred: bool,
    /// Discretize a numeric target into this many frequency bins first.
    #[arg(long)]
    pub bins: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct PruneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Rule table.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Rule or condition table.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Trees in the guided forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Report the guided forest's importances instead of rescoring.
    #[arg(long)]
    pub no_rescore: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct MineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Rule table.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub min_sup: Option<f64>,
    #[arg(long)]
    pub min_conf: Option<f64>,
    /// Longest association rule, counting the target item.
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Treat numeric terms as bare variables.
    #[arg(long)]
    pub numeric_as_variable: bool,
    /// Keep only the first N interactions after ranking.
    #[arg(long)]
    pub top: Option<usize>,
    /// Keep only interactions with at least this many left-hand-side items.
    #[arg(long, default_value_t = 1)]
    pub min_items: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct StelArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Measured rule table.
    #[arg(long)]
    pub input: PathBuf,
    /// Minimum rule frequency for candidates.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Training data the model was built from (defines the schema).
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub target: Option<String>,
    /// Rule-list CSV written by `stel`.
    #[arg(long)]
    pub model: PathBuf,
    /// Data to predict; must have the training columns.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Fraction of rows used for training in every split.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub max_depth: Option<i64>,
    /// Condition cap per run; -1 for none.
    #[arg(long, allow_negative_numbers = true)]
    pub cap: Option<i64>,
    #[command(flatten)]
    pub out: OutArgs,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "oodgap", version, about = "Human-vs-model behavioural alignment benchmark")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Benchmark config (TOML). Defaults to the shipped 17-dataset config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding `<dataset>/*.csv` decision files.
    #[arg(long, global = true, default_value = "data")]
    pub data: PathBuf,
    /// Output directory; nothing is written anywhere else.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 runs everything sequentially. Default: all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check decision files against the wire format and dataset descriptors.
    Validate(ValidateArgs),
    /// Score models against the human pool; human baselines always included.
    Evaluate(ModelsArgs),
    /// Mean-rank and OOD-accuracy leaderboards.
    Benchmark(ModelsArgs),
    /// Error-consistency matrix over all deciders of a dataset.
    Matrix(MatrixArgs),
    /// Kappa of selected decider pairs per dataset.
    Pairs(PairsArgs),
    /// Generate a distorted stimulus set from clean source images.
    Distort(DistortArgs),
    /// Mean amplitude spectrum of a source image set.
    Spectrum(SpectrumArgs),
    /// Tidy CSV series for accuracy/kappa line plots and the kappa-vs-OOD scatter.
    Plotdata(PlotArgs),
    /// Map 1000-class posteriors (`image_id,p0..p999`) to entry-level decisions.
    MapPosteriors(MapArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Files or directories; defaults to `--data`.
    pub paths: Vec<PathBuf>,
    /// Allowed shortfall per category against the most frequent category.
    #[arg(long, default_value_t = 0)]
    pub balance_slack: usize,
    #[arg(long)]
    pub skip_balance: bool,
}

#[derive(Debug, Args)]
pub struct ModelsArgs {
    pub models: Vec<String>,
    /// Every model found in the data.
    #[arg(long)]
    pub all_models: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Order {
    AsGiven,
    Human,
    Clustered,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long, value_enum, default_value_t = Order::Human)]
    pub order: Order,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// `a,b` decider pair; repeatable.
    #[arg(long = "pair", required = true, value_parser = parse_pair)]
    pub pairs: Vec<(String, String)>,
    /// Repeatable; defaults to every loaded dataset.
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.trim().to_owned(), b.trim().to_owned())),
        _ => Err(format!("expected `a,b`, got {s:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoisePolicyArg {
    Clamp,
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FalseColourArg {
    Opponent,
    RgbComplement,
}

#[derive(Debug, Args)]
pub struct DistortArgs {
    /// Clean images laid out as `<source>/<category>/*.png`.
    #[arg(long)]
    pub source: PathBuf,
    /// Benchmark dataset whose conditions to generate.
    #[arg(long)]
    pub dataset: String,
    /// Subset of the dataset's condition tokens; default all.
    #[arg(long = "condition")]
    pub conditions: Vec<String>,
    /// Mean amplitude spectrum, required for power equalisation.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = NoisePolicyArg::Clamp)]
    pub noise_policy: NoisePolicyArg,
    #[arg(long, value_enum, default_value_t = FalseColourArg::Opponent)]
    pub false_colour: FalseColourArg,
    #[arg(long, default_value_t = 0)]
    pub balance_slack: usize,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub source: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Restrict the line-plot series to one dataset.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Posterior sidecar CSV.
    pub posteriors: PathBuf,
    /// Wire-format decision file whose `object_response` is filled in from
    /// the posteriors, matched on `imagename`.
    #[arg(long)]
    pub decisions: Option<PathBuf>,
    /// Dataset of `--decisions`.
    #[arg(long)]
    pub dataset: Option<String>,
}

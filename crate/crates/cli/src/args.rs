use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "npica", version, about = "Clustering with nonparametric ICA mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixture to a CSV file and save the model.
    Fit(FitArgs),
    /// Label new rows with a saved model.
    Predict(PredictArgs),
    /// Best-permutation error of predicted labels against true labels.
    Eval(EvalArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Run the grid oracle checks.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ica,
    Npem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Kmeans,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NonlinearityArg {
    Logcosh,
    Gauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// ICA mixture with uniform and Laplace sources.
    Mixture,
    /// Flattened patches from a smooth and a white random field.
    Patches,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Column holding class labels; excluded from the features.
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub components: usize,
    #[arg(long, value_enum, default_value = "ica")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "kmeans")]
    pub init: InitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub ica_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub ica_max_inner: usize,
    #[arg(long, value_enum, default_value = "logcosh")]
    pub nonlinearity: NonlinearityArg,
    #[arg(long, default_value_t = 1.0)]
    pub alpha1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub bandwidth_coef: f64,
    /// Project onto this many principal components before fitting.
    #[arg(long)]
    pub pca: Option<usize>,
    /// Use the correlation matrix for PCA.
    #[arg(long, requires = "pca")]
    pub pca_corr: bool,
    /// Scale every feature to zero mean and unit variance.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub min_lambda: f64,
    /// Recompute posteriors with the new unmixings before the density step.
    #[arg(long)]
    pub recompute_posterior_after_ica: bool,
    /// Replace dying components instead of failing.
    #[arg(long)]
    pub reinit_dying: bool,
    #[arg(long, default_value_t = 10)]
    pub kmeans_restarts: usize,
    /// Initial responsibility of a point for its own k-means cluster.
    #[arg(long, default_value_t = 0.9)]
    pub kmeans_confidence: f64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value = "label")]
    pub pred_column: String,
    #[arg(long, default_value = "label")]
    pub truth_column: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "mixture")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// Comma-separated mixing weights; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    /// Patch side length for `--kind patches`.
    #[arg(long, default_value_t = 6)]
    pub side: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

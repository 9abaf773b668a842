//! `mcr`: simulate, fit and diagnose multiplicative coevolution regression
//! models from the command line.

mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcr_core::McrError;

#[derive(Parser, Debug)]
#[command(name = "mcr", version, about = "Multiplicative coevolution regression for network and attribute panels")]
struct Cli {
    /// Worker threads for parallel chains, replicates and accumulation.
    #[arg(long, global = true, env = "MCR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a panel from known parameters.
    Simulate(SimulateArgs),
    /// Maximum likelihood fit of the Gaussian model.
    FitMle(FitMleArgs),
    /// Gibbs sampling, including latent and ordinal variants.
    FitBayes(FitBayesArgs),
    /// ESS, posterior quantiles and sum-of-squares decomposition.
    Diagnose(DiagnoseArgs),
    /// One-step forecast comparison of nested submodels.
    ForecastStudy(ForecastArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NetworkScaleArg {
    Gaussian,
    Ordinal,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttributeScaleArg {
    Gaussian,
    Ordinal,
    Latent,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrdinalModeArg {
    Auto,
    Rank,
    Threshold,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Mle,
    PriorMean,
    PriorDraw,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mle,
    Bayes,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScoringArg {
    Latent,
    Brier,
}

/// Input files and their interpretation.
#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Network CSV with header `t,i,j,y` (0-based t, 1-based nodes).
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Attribute CSV with header `t,i,k,x`.
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    /// Dyadic covariates `i,j,s1..sq`; one intercept per dyad when absent.
    #[arg(long)]
    pub dyad_covariates: Option<PathBuf>,
    /// Nodal covariates `i,s1..sq`; one intercept per node when absent.
    #[arg(long)]
    pub node_covariates: Option<PathBuf>,
    /// Use one shared intercept instead of per-dyad and per-node intercepts
    /// for covariate blocks not given as files.
    #[arg(long)]
    pub shared_intercepts: bool,
    /// Directed relations (undirected otherwise).
    #[arg(long)]
    pub directed: bool,
    /// Fill unlisted off-diagonal pairs with 0 instead of treating them as missing.
    #[arg(long)]
    pub dense_zero: bool,
    /// Number of nodes, when not every node appears in the network file.
    #[arg(long)]
    pub nodes: Option<usize>,
}

/// Model variant.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub network_scale: NetworkScaleArg,
    #[arg(long, value_enum)]
    pub attribute_scale: Option<AttributeScaleArg>,
    /// Dimension of unobserved latent attributes.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// How ordinal observations constrain latent values.
    #[arg(long, value_enum, default_value = "auto")]
    pub ordinal_mode: OrdinalModeArg,
    /// Category levels of an ordinal network, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub levels: Option<Vec<f64>>,
    /// Category levels shared by ordinal attributes, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub attribute_levels: Option<Vec<f64>>,
    /// Leave the lowest cut point free instead of fixing it at zero.
    #[arg(long)]
    pub free_first_cut: bool,
    /// Regress the first latent relations on the dyadic covariates.
    #[arg(long)]
    pub initial_network_regression: bool,
    /// Regress the first latent attributes on the nodal covariates.
    #[arg(long)]
    pub initial_attribute_regression: bool,
}

/// Sampler settings.
#[derive(Args, Debug, Clone)]
pub struct SamplerArgs {
    /// Iterations per chain, burn-in included.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, value_enum, default_value = "mle")]
    pub init: InitArg,
    /// Prior hyperparameters as JSON; defaults when absent.
    #[arg(long)]
    pub prior: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Parameters as JSON; defaults to a stable process when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub m: usize,
    /// Number of transitions; `n + 1` time points are written.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub p: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub directed: bool,
    #[arg(long, default_value_t = 50)]
    pub burn_in: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub network_scale: NetworkScaleArg,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub attribute_scale: AttributeScaleArg,
    /// Interior cut points of an ordinal network.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    pub network_cuts: Vec<f64>,
    /// Interior cut points shared by ordinal attributes.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    pub attribute_cuts: Vec<f64>,
    #[arg(long)]
    pub shared_intercepts: bool,
    /// Output files are `<prefix>_network.csv`, `<prefix>_attributes.csv`, ...
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitMleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub network_scale: NetworkScaleArg,
    #[arg(long, value_enum)]
    pub attribute_scale: Option<AttributeScaleArg>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Use the pseudo-inverse when the normal equations are ill conditioned.
    #[arg(long)]
    pub pseudo_inverse: bool,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Estimated parameters as JSON, readable by `simulate` and `diagnose`.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitBayesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Retained draws, one JSON object per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Aligned posterior-mean latent trajectories (`t,i,k,xhat`).
    #[arg(long)]
    pub export_latent: Option<PathBuf>,
    /// Posterior summary as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Draws written by `fit-bayes`.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.025,0.5,0.975")]
    pub quantiles: Vec<f64>,
    /// Include intercept blocks.
    #[arg(long)]
    pub intercepts: bool,
    /// Decompose the sums of squares of these data (Gaussian scales only).
    #[command(flatten)]
    pub data: DataArgs,
    /// Parameters for the decomposition; the posterior mean otherwise.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: FormatArg,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Holdout time points, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub holdouts: Vec<usize>,
    /// Fit method; maximum likelihood needs Gaussian scales.
    #[arg(long, value_enum, default_value = "mle")]
    pub method: MethodArg,
    /// Score ordinal forecasts on the latent scale or by the Brier score.
    #[arg(long, value_enum, default_value = "latent")]
    pub scoring: ScoringArg,
    #[arg(long, value_enum, default_value = "text")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<McrError>() {
        Some(e) if e.is_numerical() => 3,
        Some(McrError::Io { .. }) => 4,
        Some(_) => 2,
        None => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::FitMle(a) => commands::fit_mle(a),
        Command::FitBayes(a) => commands::fit_bayes(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::ForecastStudy(a) => commands::forecast_study(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gibbs_ibp::model::{Family, GibbsModel, McConfig};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "gibbs-ibp", version, about = "Gibbs-type Indian buffet processes: simulation, primitives, calibration and inference")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a feature allocation from the sequential buffet scheme.
    Simulate(SimulateArgs),
    /// Simulate a partition from the Gibbs-type urn.
    Partition(PartitionArgs),
    /// Tabulate the primitives consumed by the sampler.
    Primitives(PrimitivesArgs),
    /// Expected feature counts and power-law constants for several models.
    Stats(StatsArgs),
    /// Fit a parameter so that E[B_m] hits a target.
    Calibrate(CalibrateArgs),
    /// Write synthetic latent-factor data with a known allocation.
    Synth(SynthArgs),
    /// Run the posterior sampler on a data matrix.
    Fit(FitArgs),
    /// Joint-distribution test of the sampler.
    Geweke(GewekeArgs),
    /// Structural densities on a grid.
    Structural(StructuralArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Dp,
    Py,
    Ngg,
    Nig,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Dp => Family::Dp,
            FamilyArg::Py => Family::Py,
            FamilyArg::Ngg => Family::Ngg,
            FamilyArg::Nig => Family::Nig,
        }
    }
}

/// Prior family and parameters shared by most subcommands.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: FamilyArg,
    /// Discount (PY, NGG).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Concentration (DP, PY).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Tilting parameter (NGG, NIG).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Monte-Carlo draws per weight-table estimate (NGG, NIG).
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub mc_seed: Option<u64>,
}

impl ModelArgs {
    pub fn build(&self, default_samples: usize) -> CliResult<GibbsModel> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::usage(format!("--model {:?} requires --{name}", self.model).to_lowercase()));
        let model = match self.model {
            FamilyArg::Dp => GibbsModel::dp(need(self.theta, "theta")?),
            FamilyArg::Py => GibbsModel::py(need(self.alpha, "alpha")?, need(self.theta, "theta")?),
            FamilyArg::Ngg => GibbsModel::ngg(need(self.alpha, "alpha")?, need(self.beta, "beta")?),
            FamilyArg::Nig => GibbsModel::nig(need(self.beta, "beta")?),
        }
        .map_err(|e| CliError::usage(e.to_string()))?;
        let mc = McConfig { samples: self.mc_samples.unwrap_or(default_samples), seed: self.mc_seed.unwrap_or(McConfig::default().seed) };
        if mc.samples < 2 {
            return Err(CliError::usage("--mc-samples must be at least 2"));
        }
        Ok(model.with_mc(mc))
    }
}

/// Compact model description `family:p1[:p2]`: `dp:THETA`, `py:ALPHA:THETA`,
/// `ngg:ALPHA:BETA`, `nig:BETA`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub text: String,
    pub model: GibbsModel,
}

impl FromStr for ModelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let family: Family = parts[0].parse().map_err(|e: gibbs_ibp::Error| e.to_string())?;
        let nums = parts[1..].iter().map(|p| p.parse::<f64>().map_err(|_| format!("`{p}` in `{s}` is not a number"))).collect::<Result<Vec<_>, _>>()?;
        let arity = match family {
            Family::Dp | Family::Nig => 1,
            Family::Py | Family::Ngg => 2,
        };
        if nums.len() != arity {
            return Err(format!("`{s}`: {family} takes {arity} parameter(s) (dp:THETA, py:ALPHA:THETA, ngg:ALPHA:BETA, nig:BETA)"));
        }
        let model = match family {
            Family::Dp => GibbsModel::dp(nums[0]),
            Family::Py => GibbsModel::py(nums[0], nums[1]),
            Family::Ngg => GibbsModel::ngg(nums[0], nums[1]),
            Family::Nig => GibbsModel::nig(nums[0]),
        }
        .map_err(|e| e.to_string())?;
        Ok(ModelSpec { text: s.to_string(), model })
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PartitionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PrimitivesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: usize,
    /// Weight-table cache directory; defaults to $GIBBS_IBP_CACHE_DIR.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct StatsArgs {
    /// Comma-separated model descriptions, e.g. `dp:1,py:0.5:1,nig:1`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<ModelSpec>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long)]
    pub n_max: usize,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = McConfig::default().seed)]
    pub mc_seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FitTarget {
    /// `θ` for DP/PY, `β` for NGG/NIG, at the given `α`.
    Free,
    /// `α` at the given `θ` (PY) or `β` (NGG).
    Alpha,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long, value_enum, default_value_t = FitTarget::Free)]
    pub fit: FitTarget,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fixed `θ` or `β` when fitting `α`.
    #[arg(long)]
    pub free: Option<f64>,
    #[arg(long, default_value_t = 25.0)]
    pub target: f64,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = McConfig::default().seed)]
    pub mc_seed: u64,
    /// Output JSON path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    /// Singleton features added to the two dense ones.
    #[arg(long, default_value_t = 8)]
    pub singletons: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sigma_y: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_w: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_a: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ChainArgs {
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    /// Hyperparameter moves on every this many sweeps.
    #[arg(long, default_value_t = 1)]
    pub hyper_every: usize,
    #[arg(long, default_value_t = 1.0)]
    pub slice_width: f64,
}

/// Hyperpriors and which blocks of the sampler are active.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PriorArgs {
    #[arg(long, default_value_t = 1.0)]
    pub gamma_shape: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub variance_shape: f64,
    #[arg(long, default_value_t = 1.0)]
    pub variance_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub free_shape: f64,
    #[arg(long, default_value_t = 1.0)]
    pub free_rate: f64,
    #[arg(long)]
    pub fix_gamma: bool,
    #[arg(long)]
    pub fix_alpha: bool,
    #[arg(long)]
    pub fix_free: bool,
    #[arg(long)]
    pub fix_scales: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitArgs {
    /// Data matrix CSV with a header row; one row per observation.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub chain: ChainArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub priors: PriorArgs,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GewekeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub p: usize,
    #[arg(long, default_value_t = 100_000)]
    pub rounds: usize,
    #[arg(long, default_value_t = 20)]
    pub batches: usize,
    #[arg(long, default_value_t = 1)]
    pub sweeps_per_round: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub priors: PriorArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct StructuralArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<ModelSpec>,
    /// Interior grid points `p = i/(points+1)`.
    #[arg(long, default_value_t = 199)]
    pub points: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

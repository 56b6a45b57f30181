use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use gradcodec::distfit::Family;
use gradcodec::fpquant::{FpFormat, Prior, ScaleMode};

#[derive(Debug, Parser)]
#[command(name = "gradcodec", version, about = "Lognormal gradient statistics: format search, pruning and coding")]
#[command(after_help = "Exit codes: 0 success, 1 domain error, 2 usage error.\n\
Environment: GRADCODEC_THREADS caps worker threads (0 = all cores).")]
pub struct Cli {
    /// Write the JSON report here instead of printing it after the summary.
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,

    /// Print only the JSON report.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank distribution families by KS distance.
    Fit(FitArgs),
    /// Choose the exponent/mantissa split for a bit budget.
    #[command(after_help = "CSV columns: sigma,N,n2,n1,expected_error")]
    Fpopt(FpoptArgs),
    /// Quantize a tensor to a low-bit float format.
    Quantize(QuantizeArgs),
    /// Solve the pruning threshold for a target sparsity.
    #[command(allow_negative_numbers = true)]
    Threshold(ThresholdArgs),
    /// Stochastically prune a tensor to a target sparsity.
    Prune(PruneArgs),
    /// Split a sparsity budget across layers.
    Allocate(AllocateArgs),
    /// Encode a pruned tensor as a prefix-coded stream.
    Encode(EncodeArgs),
    /// Decode a stream back to a tensor file.
    Decode(DecodeArgs),
    /// Monte Carlo checks of the closed forms.
    #[command(subcommand)]
    Simulate(SimulateCommand),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub tensor: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "normal,lognormal,laplace,loglaplace,uniform,cauchy")]
    pub families: Vec<Family>,
    /// Quantile of standardized log-magnitudes used for the truncation k.
    #[arg(long, default_value_t = gradcodec::distfit::DEFAULT_TRUNCATION_QUANTILE)]
    pub quantile: f64,
}

/// `v` or `lo:hi:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSpec {
    Value(f64),
    Range { lo: f64, hi: f64, step: f64 },
}

impl FromStr for SigmaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid number {t:?} in sigma {s:?}"))
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [v] => Ok(SigmaSpec::Value(num(v)?)),
            [lo, hi] => Ok(SigmaSpec::Range {
                lo: num(lo)?,
                hi: num(hi)?,
                step: gradcodec::fpquant::DEFAULT_SIGMA_STEP,
            }),
            [lo, hi, step] => Ok(SigmaSpec::Range {
                lo: num(lo)?,
                hi: num(hi)?,
                step: num(step)?,
            }),
            _ => Err(format!("sigma must be v or lo:hi[:step], got {s:?}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct FpoptArgs {
    /// A single sigma or a range lo:hi:step (natural-log std of magnitudes).
    #[arg(long)]
    pub sigma: SigmaSpec,
    /// Total bit widths, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub bits: Vec<u32>,
    #[arg(long, default_value = "lognormal")]
    pub prior: Prior,
    /// Write the allocation table as CSV.
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
}

/// `none`, `fixed=<c>` or `per-layer`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleArg(pub ScaleMode);

impl FromStr for ScaleArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(ScaleArg(ScaleMode::None)),
            "per-layer" => Ok(ScaleArg(ScaleMode::PerLayer)),
            _ => match s.strip_prefix("fixed=") {
                Some(c) => c
                    .parse()
                    .map(|c| ScaleArg(ScaleMode::Fixed(c)))
                    .map_err(|_| format!("invalid fixed scale {c:?}")),
                None => Err(format!("scale must be none, fixed=<c> or per-layer, got {s:?}")),
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    pub tensor: PathBuf,
    /// Format as 1-<exponent bits>-<mantissa bits>.
    #[arg(long)]
    pub format: FpFormat,
    #[arg(long, default_value = "none")]
    pub scale: ScaleArg,
    /// Write the dequantized values as a tensor file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub mu: f64,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub sparsity: f64,
    /// Share of entries in the low-magnitude mode.
    #[arg(long)]
    pub left_ratio: Option<f64>,
    /// Truncation multiplier used for the predicted cosine.
    #[arg(long, default_value_t = 3.0)]
    pub k: f64,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    pub tensor: PathBuf,
    #[arg(long)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Left-mode mask; defaults to the tensor's `mask` metadata entry, if any.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Ignore any mask named in the tensor metadata.
    #[arg(long, conflicts_with = "mask")]
    pub no_mask: bool,
    /// Pruned tensor output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    /// JSON array of layer profiles.
    #[arg(long)]
    pub layers: PathBuf,
    #[arg(long)]
    pub sparsity: f64,
    #[arg(long, default_value_t = gradcodec::prune::DEFAULT_MAX_CAP)]
    pub max_cap: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    pub tensor: PathBuf,
    /// Pruning threshold; defaults to the tensor's `alpha` metadata entry.
    #[arg(long)]
    pub alpha: Option<f32>,
    /// Payload width for passthrough values (16 or 32).
    #[arg(long, default_value_t = 32)]
    pub width: u8,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    pub stream: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Elements per repetition.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Quantization error, closed form vs sampled.
    #[command(after_help = "CSV columns: sigma,N,n2,n1,analytic,empirical,abs_gap")]
    Relerr {
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "8")]
        bits: Vec<u32>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Achieved sparsity vs target, lognormal and normal-prior thresholds.
    #[command(after_help = "CSV columns: sigma,mu,target,alpha,analytic,empirical,abs_gap,normal_prior_empirical")]
    Sparsity {
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
        mu: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.8,0.9,0.95")]
        sparsity: Vec<f64>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Cosine similarity after pruning, closed forms vs sampled.
    #[command(after_help = "CSV columns: sigma,k,target,alpha,analytic,analytic_linear,empirical,abs_gap")]
    Cosine {
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long, default_value_t = 2.5)]
        k: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.8,0.9,0.95,0.97")]
        sparsity: Vec<f64>,
        #[command(flatten)]
        sim: SimArgs,
    },
}

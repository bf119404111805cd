//! Option records shared by flags and the JSON config. Flags win over the
//! config, which wins over the defaults applied at the point of use.

use std::fs::File;
use std::path::{Path, PathBuf};

use catmap::measure::DistributionSpec;
use catmap::nnmap::Activation;
use catmap::otcore::Norm;
use catmap::CostFunction;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};

/// Replaces each field of `$base` by the one in `$top` when that is set.
macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),+ $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )+
    };
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub gen: GenSettings,
    #[serde(default)]
    pub ot: OtSettings,
    #[serde(default)]
    pub fit: FitSettings,
    #[serde(default)]
    pub transfer: TransferSettings,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let f = File::open(path).map_err(io_err(path))?;
        serde_json::from_reader(f).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// `sqeuclidean`, `euclidean`, `l2^p`, `linf^p`, `lr:r^p`, or a JSON record.
pub fn parse_cost(s: &str) -> Result<CostFunction, String> {
    let s = s.trim();
    if s.starts_with('{') {
        let c: CostFunction = serde_json::from_str(s).map_err(|e| e.to_string())?;
        return c.validate().map(|_| c).map_err(|e| e.to_string());
    }
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("{t}: {e}"));
    let built = match s {
        "sqeuclidean" => Ok(CostFunction::SquaredEuclidean),
        "euclidean" => CostFunction::norm_power(1.0, Norm::L2),
        _ => {
            let (norm, power) = s.split_once('^').ok_or_else(|| format!("unknown cost {s:?}"))?;
            let norm = match norm {
                "l2" => Norm::L2,
                "linf" => Norm::LInf,
                n if n.starts_with("lr:") => Norm::Lp(num(&n[3..])?),
                n => return Err(format!("unknown norm {n:?}")),
            };
            CostFunction::norm_power(num(power)?, norm)
        }
    };
    built.map_err(|e| e.to_string())
}

fn parse_dist(s: &str) -> Result<DistSource, String> {
    Ok(DistSource(s.to_string()))
}

/// Either a preset name or a path to a distribution JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(transparent)]
pub struct DistSource(pub String);

impl DistSource {
    pub fn resolve(&self) -> CliResult<DistributionSpec> {
        let spec = match self.0.as_str() {
            "gaussian-2d" => DistributionSpec::standard_gaussian(2),
            "unit-interval" => DistributionSpec::uniform_interval(-1.0, 1.0),
            "two-blocks" => catmap::repro::two_block_target(),
            "four-corners" => catmap::nnmap::corner_mixture(2.0, 0.5),
            path => {
                let f = File::open(path).map_err(io_err(path))?;
                serde_json::from_reader(f).map_err(|source| CliError::Config {
                    path: PathBuf::from(path),
                    source,
                })?
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GenSettings {
    /// Preset (gaussian-2d, unit-interval, two-blocks, four-corners) or a distribution JSON file.
    #[arg(long, value_parser = parse_dist)]
    pub dist: Option<DistSource>,
    /// Number of atoms.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<MeasureFormat>,
    /// Output file name inside the output directory.
    #[arg(long)]
    pub name: Option<String>,
}

impl GenSettings {
    pub fn overlay(mut self, top: &Self) -> Self {
        overlay!(self, top; dist, n, format, name);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OtSettings {
    /// `sqeuclidean` (default), `euclidean`, `l2^p`, `linf^p`, `lr:r^p` or a JSON record.
    #[arg(long, value_parser = parse_cost)]
    pub cost: Option<CostFunction>,
    /// Also write the optimal plan as CSV.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub plan: Option<bool>,
}

impl OtSettings {
    pub fn overlay(mut self, top: &Self) -> Self {
        overlay!(self, top; cost, plan);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Cvx,
    Kernel,
    Nn,
    #[value(name = "1d")]
    #[serde(rename = "1d")]
    OneD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationArg {
    Relu,
    Tanh,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
        }
    }
}

/// Hyperparameters of every solver; each solver reads its own subset.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FitSettings {
    /// Map class to fit.
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    /// Transport cost, in the same forms as for `ot`.
    #[arg(long, value_parser = parse_cost)]
    pub cost: Option<CostFunction>,
    /// Strong convexity modulus (cvx, 1d).
    #[arg(long)]
    pub ell: Option<f64>,
    /// Gradient Lipschitz constant (cvx, 1d).
    #[arg(long)]
    pub lip: Option<f64>,
    /// Alternating-minimisation rounds (cvx).
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// RKHS regularisation (kernel).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Gaussian kernel widths; several values fit one model each (kernel).
    #[arg(long, value_delimiter = ',')]
    pub sigma2: Option<Vec<f64>>,
    /// Adds `s·x` to the kernel map (kernel).
    #[arg(long)]
    pub offset_scale: Option<f64>,
    /// Initial step size (kernel, nn).
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Step decay scale (kernel, nn).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Subgradient steps (kernel, nn).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Hidden layer widths (nn).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Hidden-layer activation (nn).
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    /// Parameter box radius (nn).
    #[arg(long)]
    pub w: Option<f64>,
    /// Disables the parameter box (nn).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_clip: Option<bool>,
    /// Adds the input to the network output (nn).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub offset: Option<bool>,
    /// Source samples per step (nn).
    #[arg(long)]
    pub batch_source: Option<usize>,
    /// Target samples per step (nn).
    #[arg(long)]
    pub batch_target: Option<usize>,
}

impl FitSettings {
    pub fn overlay(mut self, top: &Self) -> Self {
        overlay!(self, top; solver, cost, ell, lip, max_outer, lambda, sigma2, offset_scale, alpha0, tau, steps,
            hidden, activation, w, no_clip, offset, batch_source, batch_target);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransferSettings {
    /// Pixels drawn (without replacement) from each training image.
    #[arg(long)]
    pub budget: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitSettings,
}

impl TransferSettings {
    pub fn overlay(mut self, top: &Self) -> Self {
        overlay!(self, top; budget);
        self.fit = self.fit.overlay(&top.fit);
        self
    }
}

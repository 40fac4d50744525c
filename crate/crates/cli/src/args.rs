use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdrlab::design::DesignKind;
use fdrlab::mirror_stats::{Ranker, StatKind};
use fdrlab::tamper::KnockoffFlavor;
use fdrlab::theory::{Method, MethodSpec, TheoryDesign};
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "fdrlab",
    version,
    about = "FDR variable selection under the rare/weak signal model"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a design matrix, optionally with a signal and a response.
    Design(DesignArgs),
    /// Run a selection procedure on a design and a response.
    Select(SelectArgs),
    /// Phase curves h_AR and h_ER on a grid of theta.
    TheoryPhase(PhaseArgs),
    /// FDR-TPR trade-off curve over the threshold exponent u.
    TheoryTradeoff(TradeoffArgs),
    /// FP, FN and Hamming exponents at one point.
    TheoryExponent(ExponentArgs),
    /// Monte Carlo experiment from a preset or a config file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Orthogonal,
    Block2,
    BlockD,
    Factor,
    Expdecay,
    Wishart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectMethod {
    Knockoff,
    Gm,
    Degm,
    Lasso,
    Ols,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlavorArg {
    Ec,
    Ci,
}

impl From<FlavorArg> for KnockoffFlavor {
    fn from(f: FlavorArg) -> Self {
        match f {
            FlavorArg::Ec => KnockoffFlavor::Equicorrelated,
            FlavorArg::Ci => KnockoffFlavor::ConditionalIndependence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankerArg {
    LassoPath,
    LeastSquares,
}

impl From<RankerArg> for Ranker {
    fn from(r: RankerArg) -> Self {
        match r {
            RankerArg::LassoPath => Ranker::LassoPath,
            RankerArg::LeastSquares => Ranker::LeastSquares,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatArg {
    Sgm,
    Dif,
}

impl From<StatArg> for StatKind {
    fn from(s: StatArg) -> Self {
        match s {
            StatArg::Sgm => StatKind::SignedMax,
            StatArg::Dif => StatKind::Difference,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// JSON file of flag values; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Manifest path; defaults to the output path with a .manifest.json extension.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DesignArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Block size for block-d.
    #[arg(long)]
    pub d: Option<usize>,
    /// Factor dimension for factor.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Design matrix CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Sparsity exponent of the signal; needed with --y-out.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Signal strength exponent; needed with --y-out.
    #[arg(long)]
    pub r: Option<f64>,
    /// Random signs on the signals.
    #[arg(long)]
    pub signed: bool,
    /// Response CSV.
    #[arg(long)]
    pub y_out: Option<PathBuf>,
    /// Coefficient CSV.
    #[arg(long)]
    pub beta_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

impl DesignArgs {
    pub fn kind(&self) -> CliResult<DesignKind> {
        let rho = || {
            self.rho
                .ok_or_else(|| CliError::config("rho", "required for this family"))
        };
        Ok(match self.family {
            Family::Orthogonal => DesignKind::Orthogonal,
            Family::Block2 => DesignKind::Block2 { rho: rho()? },
            Family::BlockD => DesignKind::BlockD {
                d: self
                    .d
                    .ok_or_else(|| CliError::config("d", "required for block-d"))?,
                rho: rho()?,
            },
            Family::Factor => DesignKind::Factor {
                k: self
                    .k
                    .ok_or_else(|| CliError::config("k", "required for factor"))?,
            },
            Family::Expdecay => DesignKind::ExpDecay { rho: rho()? },
            Family::Wishart => DesignKind::Wishart,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    /// Design matrix CSV with unit-norm columns.
    #[arg(long)]
    pub x: PathBuf,
    /// Response CSV.
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, value_enum)]
    pub method: SelectMethod,
    #[arg(long, value_enum, default_value = "ci")]
    pub flavor: FlavorArg,
    #[arg(long, value_enum, default_value = "lasso-path")]
    pub ranker: RankerArg,
    #[arg(long, value_enum, default_value = "sgm")]
    pub stat: StatArg,
    /// Target FDR level.
    #[arg(long, conflicts_with = "u")]
    pub q: Option<f64>,
    /// Fixed threshold exponent: select scores above sqrt(2 u log p).
    #[arg(long)]
    pub u: Option<f64>,
    /// Seed for knockoff completion and mirror directions.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Selection CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

/// Method and design class of a theory query.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TheoryTarget {
    /// Method label, e.g. knockoff-ec, gm-sgm, lassopath-prototype.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Within-block correlation of a block2 design.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "a")]
    pub rho: Option<f64>,
    /// Variable-knockoff correlation on an orthogonal design.
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
}

impl TheoryTarget {
    pub fn spec(&self) -> CliResult<MethodSpec> {
        let design = match (self.rho, self.a) {
            (Some(rho), _) => TheoryDesign::Block2 { rho },
            (None, Some(a)) => TheoryDesign::Orthogonal { a },
            (None, None) => TheoryDesign::Orthogonal { a: 0.0 },
        };
        Ok(MethodSpec::new(self.method, design)?)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhaseArgs {
    #[command(flatten)]
    pub target: TheoryTarget,
    /// Also locate the curves numerically from the optimized exponent.
    #[arg(long)]
    pub numeric: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TradeoffArgs {
    #[command(flatten)]
    pub target: TheoryTarget,
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub r: f64,
    /// Largest u on the grid; defaults to max(r, 1) + theta.
    #[arg(long)]
    pub u_max: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExponentArgs {
    #[command(flatten)]
    pub target: TheoryTarget,
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub r: f64,
    /// Threshold exponent; the Hamming-optimal u when omitted.
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Built-in experiment (exp1 to exp5); ignored when --config is given.
    #[arg(long)]
    pub preset: Option<String>,
    /// Experiment config JSON; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Result table CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "skewlat", version, about = "Skew-orthogonal polynomials, kernels and Pfaffian correlations on discrete and q-lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monic orthogonal polynomials and their norms.
    Ops(OpsArgs),
    /// Skew-orthogonal polynomials, the u sequence and the skew Gram matrix.
    Sops(SopsArgs),
    /// Christoffel-Darboux, symplectic or matrix kernels at point pairs.
    Kernel(KernelArgs),
    /// k-point correlation functions by Pfaffian, optionally by enumeration.
    Correlate(CorrelateArgs),
    /// Run the invariant battery.
    Verify(VerifyArgs),
    /// Skew moment matrix, its Pfaffian minors and skew Borel factors.
    Moments(MomentsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyName {
    Meixner,
    Charlier,
    Hahn,
    #[value(name = "alsalamcarlitz")]
    AlSalamCarlitz,
    #[value(name = "littleqjacobi")]
    LittleQJacobi,
}

/// Family selection. Parameters are exact rationals such as `3/4` or `-1`;
/// omitted ones take the family defaults.
#[derive(Args, Debug, Clone)]
pub struct FamilyArgs {
    #[arg(long, value_enum)]
    pub family: FamilyName,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    /// Hahn support size: the lattice is 0..=N.
    #[arg(long = "hahn-N")]
    pub hahn_n: Option<u32>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct NumericArgs {
    /// Float working precision in bits (at least 64); overrides SKEWLAT_PRECISION_BITS.
    #[arg(long)]
    pub precision_bits: Option<usize>,
    #[arg(long)]
    pub series_tail_tol: Option<f64>,
    #[arg(long)]
    pub identity_tol: Option<f64>,
    #[arg(long)]
    pub max_terms: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    #[arg(long = "out", value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Moments,
    Classical,
    Explicit,
}

#[derive(Args, Debug)]
pub struct OpsArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long = "N", hide = true)]
    pub hahn_alias: Option<u32>,
    #[arg(long, default_value_t = 4)]
    pub n_max: usize,
    #[arg(long, value_enum, default_value_t = Method::Classical)]
    pub method: Method,
    /// Points per branch for truncated sums; adaptive when omitted.
    #[arg(long)]
    pub window: Option<usize>,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct SopsArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long = "N", hide = true)]
    pub hahn_alias: Option<u32>,
    #[arg(long, default_value_t = 4)]
    pub n_max: usize,
    #[arg(long, value_enum, default_value_t = Method::Classical)]
    pub method: Method,
    #[arg(long)]
    pub window: Option<usize>,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelChoice {
    Unitary,
    Symplectic,
    Matrix,
}

#[derive(Args, Debug)]
pub struct KernelArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Kernel order (number of particles).
    #[arg(long = "N")]
    pub n: usize,
    /// Point pairs, `x1,y1;x2,y2;...`.
    #[arg(long, allow_hyphen_values = true)]
    pub points: String,
    #[arg(long, value_enum, default_value_t = KernelChoice::Symplectic)]
    pub kind: KernelChoice,
    #[arg(long, value_enum, default_value_t = Method::Classical)]
    pub method: Method,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long = "N")]
    pub n: usize,
    /// Number of points; must match `--points` when given.
    #[arg(long)]
    pub k: Option<usize>,
    /// Lattice points, `x1;x2;...` (commas also accepted).
    #[arg(long, allow_hyphen_values = true)]
    pub points: String,
    /// Restrict the lattice to this many points per branch.
    #[arg(long)]
    pub window: Option<usize>,
    /// Also enumerate configurations and report the difference.
    #[arg(long)]
    pub check_bruteforce: bool,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Restrict the battery to one family; all five defaults otherwise.
    #[arg(long, value_enum)]
    pub family: Option<FamilyName>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long = "hahn-N", alias = "N")]
    pub hahn_n: Option<u32>,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long = "N", hide = true)]
    pub hahn_alias: Option<u32>,
    /// Matrix dimension (even).
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long)]
    pub window: Option<usize>,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

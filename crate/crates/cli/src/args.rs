use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use teven_core::{Selector, ShiftStrategy, SolverConfig};

use crate::complex_arg::parse_complex;

#[derive(Debug, Parser)]
#[command(name = "teven-eig", version, about = "Rational Krylov eigensolver for T-even matrix polynomials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a test problem (JSON manifest plus Matrix Market coefficients).
    Generate(GenerateArgs),
    /// Compute eigenvalues of a problem and print a report.
    Solve(SolveArgs),
    /// Compare a report against a dense oracle.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemKind {
    Butterfly,
    Gyroscopic,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub kind: ProblemKind,
    /// Grid size of the butterfly problem (order m^2).
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    /// The ten butterfly weights c01,c02,c11,...,c42.
    #[arg(long, value_delimiter = ',')]
    pub constants: Option<Vec<f64>>,
    /// Order of the gyroscopic problem.
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Manifest path; coefficient files go next to it.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Fixed,
    Aggressive,
    Lazy,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem manifest.
    pub problem: PathBuf,
    /// Wanted Ritz values; each yields a pair +-mu.
    #[arg(short = 'M', long, default_value_t = 6)]
    pub num_eigs: usize,
    /// Columns beyond M before a restart (default 2M).
    #[arg(short = 'E', long)]
    pub extension: Option<usize>,
    #[arg(long, value_parser = parse_complex, default_value = "0.5+2i", allow_hyphen_values = true)]
    pub shift: Complex64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Lazy)]
    pub strategy: StrategyArg,
    /// Target for `--strategy target` (defaults to `--shift`).
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    pub target: Option<Complex64>,
    /// Keep the Ritz values nearest this point instead of the largest.
    #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
    pub nearest: Option<Complex64>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol_lock: f64,
    /// Scale the lock tolerance by the Frobenius norm of Hbar.
    #[arg(long)]
    pub relative_lock: bool,
    #[arg(long, default_value_t = 1e-5)]
    pub shift_threshold: f64,
    #[arg(long, default_value_t = 200)]
    pub max_cycles: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_inf: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solve the reversal and report reciprocals (smallest |mu| first).
    #[arg(long)]
    pub reverse: bool,
    /// Line-delimited JSON trace on stderr.
    #[arg(long, env = "TEVEN_EIG_TRACE", value_parser = clap::builder::FalseyValueParser::new())]
    pub trace: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

impl SolveArgs {
    pub fn config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.num_eigs);
        if let Some(e) = self.extension {
            cfg.extension = e;
        }
        cfg.initial_shift = self.shift;
        cfg.strategy = match self.strategy {
            StrategyArg::Fixed => ShiftStrategy::Fixed,
            StrategyArg::Aggressive => ShiftStrategy::Aggressive,
            StrategyArg::Lazy => ShiftStrategy::Lazy,
            StrategyArg::Target => ShiftStrategy::Target(self.target.unwrap_or(self.shift)),
        };
        if let Some(mu0) = self.nearest {
            cfg.selector = Selector::Nearest(mu0);
        }
        cfg.tol_lock = self.tol_lock;
        cfg.relative_lock = self.relative_lock;
        cfg.shift_change_threshold = self.shift_threshold;
        cfg.max_cycles = self.max_cycles;
        cfg.tol_inf = self.tol_inf;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Problem manifest.
    pub problem: PathBuf,
    /// Report written by `solve` (JSON or CSV).
    pub report: PathBuf,
    /// Largest accepted relative deviation.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Largest companion pencil the oracle will factor.
    #[arg(long, default_value_t = 1200)]
    pub cap: usize,
    /// Print the comparison as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

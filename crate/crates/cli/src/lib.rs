//! `teven-eig`: generate T-even test problems, solve them, and check the
//! results against a dense oracle.
//!
//! Exit codes: 0 success, 1 validation found deviations, 2 no convergence
//! (partial report still printed), 3 input error, 4 shift on the spectrum
//! after retries, 5 internal numerical failure.

pub mod args;
pub mod complex_arg;
pub mod report;
pub mod validate;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use num_complex::Complex64;
use serde::Serialize;
use teven_core::densekernels::dense_polyeig_oracle;
use teven_core::matpoly::io::{read_polynomial, write_polynomial};
use teven_core::matpoly::ButterflyConstants;
use teven_core::{generate_butterfly, generate_gyroscopic, run_observed, Error, Phase, ShiftStrategy, SolverConfig};

use crate::args::{Cli, Command, Format, GenerateArgs, ProblemKind, SolveArgs, ValidateArgs};
use crate::report::RunReport;

pub const EXIT_OK: u8 = 0;
pub const EXIT_DEVIATION: u8 = 1;
pub const EXIT_NO_CONVERGENCE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_SHIFT_ON_SPECTRUM: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

/// Extra attempts with a nudged shift after `ShiftOnSpectrum`.
pub const SHIFT_RETRIES: usize = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    ShiftOnSpectrum(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::ShiftOnSpectrum(_) => EXIT_SHIFT_ON_SPECTRUM,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::ShiftOnSpectrum(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. }
            | Error::Format(_)
            | Error::Dimension(_)
            | Error::InvalidParameter(_)
            | Error::NotTEven { .. }
            | Error::CapExceeded { .. } => CliError::Input(e.to_string()),
            Error::ShiftOnSpectrum { .. } => CliError::ShiftOnSpectrum(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let res = match &cli.command {
        Command::Generate(a) => cmd_generate(a, &mut stdout.lock()),
        Command::Solve(a) => cmd_solve(a, &mut stdout.lock()),
        Command::Validate(a) => cmd_validate(a, &mut stdout.lock()),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("teven-eig: {}", e.message());
            e.exit_code()
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Internal(format!("writing output: {e}"))
}

pub fn cmd_generate<W: Write>(a: &GenerateArgs, out: &mut W) -> Result<u8, CliError> {
    let p = match a.kind {
        ProblemKind::Butterfly => {
            let mut constants = ButterflyConstants::default();
            if let Some(c) = &a.constants {
                if c.len() != 10 {
                    return Err(CliError::Input(format!("--constants needs 10 values, got {}", c.len())));
                }
                for (k, pair) in constants.c.iter_mut().enumerate() {
                    *pair = [c[2 * k], c[2 * k + 1]];
                }
            }
            generate_butterfly(a.m, &constants)?
        }
        ProblemKind::Gyroscopic => generate_gyroscopic(a.n, a.seed)?,
    };
    for path in write_polynomial(&p, &a.out)? {
        writeln!(out, "{}", path.display()).map_err(io_err)?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TraceLine<'a, T: Serialize> {
    event: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn trace_line<T: Serialize>(event: &str, body: &T) {
    if let Ok(s) = serde_json::to_string(&TraceLine { event, body }) {
        eprintln!("{s}");
    }
}

/// Moves a shift off the spectrum by a small relative rotation and scaling.
pub fn nudge(z: Complex64, attempt: usize) -> Complex64 {
    let eps = 1e-6 * attempt as f64;
    let scale = z.norm().max(1.0);
    z + Complex64::from_polar(eps * scale, 0.7 + attempt as f64)
}

fn nudged(cfg: &SolverConfig, attempt: usize) -> SolverConfig {
    let mut cfg = cfg.clone();
    cfg.initial_shift = nudge(cfg.initial_shift, attempt);
    if let ShiftStrategy::Target(mu0) = cfg.strategy {
        cfg.strategy = ShiftStrategy::Target(nudge(mu0, attempt));
    }
    cfg
}

pub fn cmd_solve<W: Write>(a: &SolveArgs, out: &mut W) -> Result<u8, CliError> {
    let p = read_polynomial(&a.problem)?;
    let base = a.config();
    base.validate()?;
    let started = Instant::now();
    let mut attempt = 0;
    let (cfg, outcome, traced) = loop {
        let cfg = if attempt == 0 { base.clone() } else { nudged(&base, attempt) };
        let mut seen_cycles = 0;
        let outcome = run_observed(&p, &cfg, a.reverse, |phase, st| {
            if !a.trace {
                return;
            }
            if phase == Phase::Expand {
                for step in st.last_steps() {
                    trace_line("step", step);
                }
            }
            for c in &st.trace()[seen_cycles..] {
                trace_line("cycle", c);
            }
            seen_cycles = st.trace().len();
        });
        match outcome {
            Err(Error::ShiftOnSpectrum { .. }) if attempt < SHIFT_RETRIES => {
                attempt += 1;
                eprintln!("teven-eig: shift on the spectrum, retrying with a nudged shift ({attempt}/{SHIFT_RETRIES})");
            }
            other => break (cfg, other, seen_cycles),
        }
    };
    let (res, converged) = match outcome {
        Ok(r) => (r, true),
        Err(Error::NoConvergence { cycles, partial }) => {
            eprintln!("teven-eig: no convergence after {cycles} cycles; reporting partial results");
            (*partial, false)
        }
        Err(e) => return Err(e.into()),
    };
    if a.trace {
        // the final cycle is recorded after the last observed phase
        for c in res.trace.iter().skip(traced) {
            trace_line("cycle", c);
        }
    }
    let mut report = RunReport::new(&a.problem, p.n(), p.degree(), a.reverse, cfg, &res);
    report.converged = converged;
    report.elapsed_seconds = started.elapsed().as_secs_f64();
    match a.format {
        Format::Json => report.write_json(&mut *out).map_err(io_err)?,
        Format::Csv => report
            .write_csv(&mut *out)
            .map_err(|e| CliError::Internal(format!("writing output: {e}")))?,
    }
    Ok(if converged { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

pub fn cmd_validate<W: Write>(a: &ValidateArgs, out: &mut W) -> Result<u8, CliError> {
    let p = read_polynomial(&a.problem)?;
    let values = report::read_values(&a.report).map_err(CliError::Input)?;
    if values.is_empty() {
        eprintln!("teven-eig: warning: {} contains no eigenvalues; nothing to validate", a.report.display());
    }
    let oracle = dense_polyeig_oracle(&p, a.cap)?;
    let cmp = validate::compare(&values, &oracle, a.tol);
    if a.json {
        serde_json::to_writer_pretty(&mut *out, &cmp).map_err(|e| io_err(e.into()))?;
        writeln!(out).map_err(io_err)?;
    } else {
        writeln!(out, "{cmp}").map_err(io_err)?;
    }
    Ok(if cmp.passed() { EXIT_OK } else { EXIT_DEVIATION })
}

/// Convenience for tests and scripts: solve a manifest with a config.
pub fn solve_path(problem: &Path, cfg: &SolverConfig, reverse: bool) -> Result<RunReport, CliError> {
    let p = read_polynomial(problem)?;
    let res = run_observed(&p, cfg, reverse, |_, _| {})?;
    Ok(RunReport::new(problem, p.n(), p.degree(), reverse, cfg.clone(), &res))
}

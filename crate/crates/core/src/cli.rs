//! Command-line front end. Every `cmd_*` function returns the process exit
//! code: 0 ok, 2 input error, 3 not PSD, 4 no certificate, 5 invalid
//! certificate.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::{bench_diag, bench_gram, diag_csv, gram_csv};
use crate::error::{Error, Result};
use crate::lm::LmOptions;
use crate::polymat::PolyMatrix;
use crate::schmudgen::{diagonalize, verify_diagonalization, DiagonalizationFile};
use crate::sos::{certify_matrix, verify_certificate, Certificate, Domain, SosOptions, GRAM_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_PSD: i32 = 3;
pub const EXIT_NO_CERTIFICATE: i32 = 4;
pub const EXIT_INVALID_CERTIFICATE: i32 = 5;

/// Residual up to which `verify` accepts a certificate.
pub const VERIFY_TOL: f64 = GRAM_TOL;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotPsd { .. } => EXIT_NOT_PSD,
        Error::NoCertificate(_) => EXIT_NO_CERTIFICATE,
        Error::InvalidCertificate(_) => EXIT_INVALID_CERTIFICATE,
        Error::Domain(_) | Error::PivotRequired | Error::ZeroBlock | Error::Io(_) | Error::Json(_) => EXIT_INPUT,
    }
}

#[derive(Debug, Parser)]
#[command(name = "sosrf", version, about = "Diagonalize symmetric polynomial matrices and certify positive semidefiniteness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Diagonalize a symmetric polynomial matrix.
    Diagonalize {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a sum-of-squares certificate over a domain.
    Certify {
        input: PathBuf,
        /// rn, rline, halfline, interval:a:b or strip:a:b
        #[arg(long)]
        domain: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Check a certificate against a matrix.
    Verify {
        matrix: PathBuf,
        certificate: PathBuf,
        #[arg(long, default_value_t = VERIFY_TOL)]
        tol: f64,
    },
    /// Random diagonalization benchmark (CSV on stdout).
    BenchDiag {
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3])]
        m: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100])]
        d: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print NA in the seconds column so output depends only on the seed.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Planted low-rank Gram benchmark (CSV on stdout).
    BenchGram {
        #[arg(long, value_delimiter = ',', default_values_t = [100])]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [50])]
        k: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Debug, Args, Clone)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// LM residual tolerance τ.
    #[arg(long, default_value_t = LmOptions::default().residual_tol)]
    pub tol: f64,
    #[arg(long)]
    pub rank_max: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
}

impl SearchArgs {
    fn sos_options(&self) -> SosOptions {
        SosOptions {
            lm: LmOptions { residual_tol: self.tol, ..LmOptions::default() },
            r_max: self.rank_max,
            restarts: self.restarts,
            seed: self.seed,
            ..SosOptions::default()
        }
    }
}

fn report(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

fn read_matrix(path: &Path) -> Result<PolyMatrix> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    emit_text(&(text + "\n"), out)
}

fn emit_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn cmd_diagonalize(input: &Path, output: Option<&Path>) -> i32 {
    let run = || -> Result<()> {
        let f = read_matrix(input)?;
        let diagonalization = diagonalize(&f)?;
        let residuals = verify_diagonalization(&f, &diagonalization)?;
        emit(&DiagonalizationFile { diagonalization, residuals }, output)
    };
    run().map_or_else(|e| report(&e), |()| EXIT_OK)
}

pub fn cmd_certify(input: &Path, domain_flag: &str, output: Option<&Path>, opts: &SosOptions) -> i32 {
    let run = || -> Result<()> {
        let domain: Domain = domain_flag.parse()?;
        let f = read_matrix(input)?;
        let cert = certify_matrix(&f, domain, opts)?;
        emit(&cert, output)
    };
    run().map_or_else(|e| report(&e), |()| EXIT_OK)
}

pub fn cmd_verify(matrix: &Path, certificate: &Path, tol: f64) -> i32 {
    let run = || -> Result<f64> {
        let f = read_matrix(matrix)?;
        let cert: Certificate = serde_json::from_str(&fs::read_to_string(certificate)?)?;
        verify_certificate(&f, &cert)
    };
    match run() {
        Ok(residual) if residual <= tol => {
            println!("residual {residual:e}");
            EXIT_OK
        }
        Ok(residual) => {
            println!("residual {residual:e}");
            report(&Error::InvalidCertificate(format!("residual {residual:e} exceeds {tol:e}")))
        }
        Err(e) => report(&e),
    }
}

pub fn cmd_bench_diag(m_list: &[usize], d_list: &[usize], trials: usize, seed: u64, timing: bool, out: Option<&Path>) -> i32 {
    let run = || -> Result<()> {
        let rows = bench_diag(m_list, d_list, trials, seed)?;
        emit_text(&diag_csv(&rows, timing), out)
    };
    run().map_or_else(|e| report(&e), |()| EXIT_OK)
}

pub fn cmd_bench_gram(
    n_list: &[usize],
    k_list: &[usize],
    trials: usize,
    search: &SearchArgs,
    timing: bool,
    out: Option<&Path>,
) -> i32 {
    let run = || -> Result<()> {
        let opts = LmOptions { residual_tol: search.tol, ..LmOptions::default() };
        let r_max = search.rank_max.unwrap_or(3);
        let rows = bench_gram(n_list, k_list, trials, search.seed, &opts, r_max, search.restarts)?;
        emit_text(&gram_csv(&rows, timing), out)
    };
    run().map_or_else(|e| report(&e), |()| EXIT_OK)
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Diagonalize { input, out } => cmd_diagonalize(&input, out.as_deref()),
        Command::Certify { input, domain, out, search } => {
            cmd_certify(&input, &domain, out.as_deref(), &search.sos_options())
        }
        Command::Verify { matrix, certificate, tol } => cmd_verify(&matrix, &certificate, tol),
        Command::BenchDiag { m, d, trials, seed, no_timing, out } => {
            cmd_bench_diag(&m, &d, trials, seed, !no_timing, out.as_deref())
        }
        Command::BenchGram { n, k, trials, no_timing, out, search } => {
            cmd_bench_gram(&n, &k, trials, &search, !no_timing, out.as_deref())
        }
    }
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mimo_mmse::experiments::{self, ExperimentConfig, Scheme};
use mimo_mmse::selftest::{run_selftest, Fault};
use mimo_mmse::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

#[derive(Parser)]
#[command(name = "mimo-mmse", version, about = "MMSE mutual information of correlated MIMO channels")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration merged over the command defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo realizations.
    #[arg(long = "n-mc", global = true)]
    n_mc: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// SNR grid in dB, replacing the configured one.
    #[arg(long = "snr-db", global = true, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    None,
    IbarStructured,
    IhatStructured,
    TrueStructured,
    TrueGeneral,
    AntennaSelection,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::None => Scheme::None,
            SchemeArg::IbarStructured => Scheme::IbarStructured,
            SchemeArg::IhatStructured => Scheme::IhatStructured,
            SchemeArg::TrueStructured => Scheme::TrueStructured,
            SchemeArg::TrueGeneral => Scheme::TrueGeneral,
            SchemeArg::AntennaSelection => Scheme::AntennaSelection,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    DropSigma4,
    WrongLogBase,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed point and large-system approximations without precoding.
    FixedPoint,
    /// Monte-Carlo mutual information of a precoding scheme.
    Emi {
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Optimize a precoder and score it on fresh channel draws.
    Optimize {
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Best number of active antennas for an uncorrelated channel.
    SelectAntennas,
    /// Write the CSV table of one figure.
    Figure {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=5))]
        id: u32,
    },
    /// Wall-clock time of each configured scheme.
    Timing,
    /// Seeded property suite.
    Selftest {
        /// Corrupt one reference path on purpose.
        #[arg(long, value_enum)]
        inject: Option<FaultArg>,
    },
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io(_) => Failure::Usage(e.to_string()),
            other => Failure::Numeric(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn resolve(base: ExperimentConfig, common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(e.to_string()))?;
            base.merged(&value)?
        }
        None => base,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.n_mc {
        cfg.n_mc = n;
    }
    if let Some(grid) = &common.snr_db {
        cfg.snr_grid_db = grid.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(common: &Common) -> Result<Box<dyn Write>, Failure> {
    Ok(match &common.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(common: &Common, value: &T) -> Result<(), Failure> {
    let mut w = output(common)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let common = &cli.common;
    let with_scheme = |scheme: Option<SchemeArg>, fallback: Scheme| -> Result<ExperimentConfig, Failure> {
        let mut cfg = resolve(ExperimentConfig::default(), common)?;
        if let Some(s) = scheme {
            cfg.scheme = s.into();
        } else if common.config.is_none() {
            cfg.scheme = fallback;
        }
        Ok(cfg)
    };
    match cli.command {
        Command::FixedPoint => {
            let cfg = resolve(ExperimentConfig::default(), common)?;
            write_json(common, &experiments::fixed_point_rows(&cfg)?)?;
        }
        Command::Emi { scheme } => {
            let cfg = with_scheme(scheme, Scheme::None)?;
            write_json(common, &experiments::emi_rows(&cfg)?)?;
        }
        Command::Optimize { scheme } => {
            let cfg = with_scheme(scheme, Scheme::IbarStructured)?;
            write_json(common, &experiments::optimize_rows(&cfg)?)?;
        }
        Command::SelectAntennas => {
            let cfg = resolve(ExperimentConfig::default(), common)?;
            write_json(common, &experiments::selection_rows(&cfg)?)?;
        }
        Command::Figure { id } => {
            let cfg = resolve(ExperimentConfig::for_figure(id)?, common)?;
            let mut w = output(common)?;
            experiments::run_figure(id, &cfg, &mut w)?;
            w.flush()?;
        }
        Command::Timing => {
            let base = ExperimentConfig { snr_grid_db: vec![10.0], ..ExperimentConfig::default() };
            let cfg = resolve(base, common)?;
            write_json(common, &experiments::run_timing(&cfg)?)?;
        }
        Command::Selftest { inject } => {
            let fault = match inject {
                None => Fault::None,
                Some(FaultArg::DropSigma4) => Fault::DropSigma4,
                Some(FaultArg::WrongLogBase) => Fault::WrongLogBase,
            };
            let report = run_selftest(fault)?;
            let mut w = output(common)?;
            write!(w, "{}", report.render())?;
            w.flush()?;
            if !report.passed() {
                return Ok(EXIT_SELFTEST);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}

//! Command-line experiment runner for `saa-lab-core`.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use saa_lab_core::estimators::ErrorKind;
use saa_lab_core::Vector;

use commands::{BoundsArgs, CheckArgs};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "saa-lab",
    version,
    about = "Stochastic approximation experiments: simulate, fit rates, evaluate bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate error series from a config file and write them as CSV.
    Run {
        config: PathBuf,
        #[arg(long, env = "SAA_LAB_WORKERS")]
        workers: Option<usize>,
        /// Also write a log-log chart.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Fit a log-log rate to a CSV series.
    Fit {
        csv: PathBuf,
        /// Inclusive checkpoint window `n_min:n_max`.
        #[arg(long, value_parser = parse_window)]
        window: (usize, usize),
        /// Series to fit when the file holds both (weak|strong).
        #[arg(long, value_parser = parse_kind)]
        kind: Option<ErrorKind>,
    },
    /// Evaluate K(lambda) and the discrete bound inequalities.
    Bounds {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long = "L")]
        l_const: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
        lambda: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        n_max: u64,
    },
    /// Probe the dissipativity and growth conditions of a built-in problem.
    Check {
        problem: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override both dissipativity constants.
        #[arg(long = "L")]
        l_const: Option<f64>,
        /// Quadratic problem mean, comma separated.
        #[arg(long, value_parser = parse_vector)]
        mu: Option<Vector>,
        #[arg(long)]
        sigma: Option<f64>,
    },
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected n_min:n_max")?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad n_min `{a}`"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad n_max `{b}`"))?;
    if a > b {
        return Err(format!("empty window {a}:{b}"));
    }
    Ok((a, b))
}

fn parse_kind(s: &str) -> Result<ErrorKind, String> {
    ErrorKind::parse(s).ok_or_else(|| format!("expected weak or strong, got `{s}`"))
}

fn parse_vector(s: &str) -> Result<Vector, String> {
    let xs = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{x}`"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Vector::new(xs).map_err(|e| e.to_string())
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

pub fn execute(command: Command, out: &mut dyn std::io::Write) -> CliResult<()> {
    match command {
        Command::Run {
            config,
            workers,
            svg,
        } => {
            commands::cmd_run(
                &config,
                workers.unwrap_or_else(default_workers),
                svg.as_deref(),
                out,
            )?;
        }
        Command::Fit { csv, window, kind } => {
            commands::cmd_fit(&csv, window, kind, out)?;
        }
        Command::Bounds {
            epsilon,
            eta,
            l_const,
            lambda,
            n_max,
        } => {
            let args = BoundsArgs {
                epsilon,
                eta,
                l_const,
                lambdas: lambda,
                n_max,
            };
            commands::cmd_bounds(&args, out)?;
        }
        Command::Check {
            problem,
            samples,
            seed,
            l_const,
            mu,
            sigma,
        } => {
            let args = CheckArgs {
                problem,
                samples,
                seed,
                l_override: l_const,
                mu,
                sigma,
            };
            commands::cmd_check(&args, out)?;
        }
    }
    Ok(())
}

/// Parses `std::env::args`, runs the command and maps errors to exit codes.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli.command, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

mod commands;
mod config;
mod plot;

use commands::Ctx;
use config::{ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{step}: {source}")]
    Solver { step: String, source: qmkz::Error },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("bound assertion failed: {0}")]
    Bound(String),
}

impl CliError {
    pub fn config(field: &str, e: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{field}: {e}"))
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Iteration failures keep their own exit code; anything else the core
    /// rejects traces back to the configuration.
    pub fn from_core(step: &str, e: qmkz::Error) -> Self {
        match e {
            qmkz::Error::NonConvergence { .. } | qmkz::Error::NonContraction(_) | qmkz::Error::Truncation { .. } => {
                CliError::Solver {
                    step: step.to_string(),
                    source: e,
                }
            }
            other => CliError::config(step, other),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Solver { .. } => 3,
            CliError::Validation(_) => 4,
            CliError::Bound(_) => 5,
        }
    }
}

#[derive(Parser)]
#[command(name = "qmkz", version, about = "Quantum MKZ alpha-fractal experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `out` in the config, then `./out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Minimum grid size (raised so every partition node is a grid node).
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve for the fractal function and export it.
    Solve,
    /// Compute scaling brackets for a shape constraint and validate alpha.
    Constrain,
    /// Check a convergence bound over a range of orders.
    Converge,
    /// Estimate the box-counting dimension of the graph.
    Dimension,
    /// Fit the germ by fractal Muntz monomials.
    Muntz,
    /// L^p contraction factor and error bound.
    Lp,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::config("threads", e))?;
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config: required".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    config.apply(&Overrides {
        grid: cli.grid,
        tol: cli.tol,
        seed: cli.seed,
    });
    let ctx = Ctx {
        out: commands::resolve_out(cli.out.as_deref(), &config),
        config_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        config,
    };
    match cli.command {
        Command::Solve => commands::cmd_solve(&ctx),
        Command::Constrain => commands::cmd_constrain(&ctx),
        Command::Converge => commands::cmd_converge(&ctx),
        Command::Dimension => commands::cmd_dimension(&ctx),
        Command::Muntz => commands::cmd_muntz(&ctx),
        Command::Lp => commands::cmd_lp(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

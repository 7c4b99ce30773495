//! `bbm`: command-line driver for the branching-Brownian-motion numerics.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 crosscheck tolerance failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{Knobs, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Crosscheck(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Crosscheck(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Crosscheck(_) => "crosscheck",
        }
    }
}

impl From<bbm_core::Error> for CliError {
    fn from(e: bbm_core::Error) -> Self {
        use bbm_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::UnsupportedRegime { .. } | E::Domain(_) | E::NoFiniteMoment { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "bbm", version, about = "Branching Brownian motion with absorption: standing waves, s0, KPP fronts and Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Drift towards the absorbing origin is -mu; regime C needs mu > sqrt(2 beta).
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Branching rate (default 1).
    #[arg(long)]
    beta: Option<f64>,
    /// TOML file of knobs (or a previous run's manifest); its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root directory for outputs; each subcommand writes into its own subdirectory.
    #[arg(long, env = "BBM_OUTPUT_DIR", default_value = "bbm-output")]
    output_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Power-series coefficients and the constants s0, B0, B_s0.
    Series {
        #[command(flatten)]
        common: Common,
        /// Truncation order.
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Standing wave omega_s by shooting (regime C), or the critical travelling wave.
    Waves {
        #[command(flatten)]
        common: Common,
        /// Boundary value omega_s(0).
        #[arg(long)]
        s: Option<f64>,
        /// Bisection tolerance on the initial slope.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Half-line KPP equation: relaxation to omega_s or the travelling front.
    Pde {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dx: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Boundary value u(t, 0) (regime C).
        #[arg(long)]
        s: Option<f64>,
        /// Right end of the grid (regime C).
        #[arg(long)]
        x_max: Option<f64>,
        /// Comma-separated snapshot times (default: the horizon).
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
    /// Monte Carlo estimate of omega_s(x0) and the law of the absorbed count.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Per-replica time budget.
        #[arg(long)]
        horizon: Option<f64>,
        /// Write the empirical pmf for n = 0..=N to histogram.dat.
        #[arg(long)]
        n_tail: Option<u64>,
    },
    /// The s0 curve and the limit of p*s0 as the drift grows.
    #[command(name = "s0-curve")]
    S0Curve {
        #[command(flatten)]
        common: Common,
        /// Comma-separated drift ratios mu / sqrt(beta).
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Series vs ODE vs Monte Carlo value of omega_s(x0).
    Crosscheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

type Runner = fn(&RunConfig) -> Result<(), CliError>;

impl Command {
    /// Subcommand name, runner, shared flags and the knobs given on the command line.
    fn split(self) -> (&'static str, Runner, Common, Knobs) {
        match self {
            Command::Series { common, n_max } => {
                let k = Knobs { n_max, ..Knobs::default() };
                ("series", commands::series, common, k)
            }
            Command::Waves { common, s, tol } => {
                let k = Knobs { s, tol, ..Knobs::default() };
                ("waves", commands::waves, common, k)
            }
            Command::Pde { common, dx, dt, horizon, s, x_max, snapshots } => {
                let k = Knobs { dx, dt, horizon, s, x_max, snapshots, ..Knobs::default() };
                ("pde", commands::pde, common, k)
            }
            Command::Mc { common, x0, s, replicas, epsilon, dt, seed, threads, horizon, n_tail } => {
                let k = Knobs { x0, s, replicas, epsilon, dt, seed, threads, horizon, n_tail, ..Knobs::default() };
                ("mc", commands::mc, common, k)
            }
            Command::S0Curve { common, ratios, n_max } => {
                let k = Knobs { ratios, n_max, ..Knobs::default() };
                ("s0-curve", commands::s0_curve, common, k)
            }
            Command::Crosscheck { common, x0, s, tol, replicas, epsilon, dt, seed, threads } => {
                let k = Knobs { x0, s, tol, replicas, epsilon, dt, seed, threads, ..Knobs::default() };
                ("crosscheck", commands::crosscheck, common, k)
            }
        }
    }
}

fn resolve(name: &'static str, common: Common, flags: Knobs) -> Result<RunConfig, CliError> {
    let flags = Knobs {
        mu: common.mu,
        beta: common.beta,
        ..flags
    };
    let knobs = match &common.config {
        Some(path) => flags.overlay(&Knobs::from_file(path)?),
        None => flags,
    };
    Ok(RunConfig {
        subcommand: name,
        knobs,
        output_dir: common.output_dir,
        config_file: common.config,
    })
}

/// Machine-readable failure record, printed to stderr and written to
/// `failure.toml` in the run directory when that is writable.
fn report_failure(name: &str, cfg: Option<&RunConfig>, e: &CliError) {
    #[derive(Serialize)]
    struct Failure<'a> {
        subcommand: &'a str,
        status: &'a str,
        kind: &'a str,
        exit_code: u8,
        message: String,
    }
    let rec = Failure {
        subcommand: name,
        status: "failure",
        kind: e.kind(),
        exit_code: e.code(),
        message: e.to_string(),
    };
    let text = toml::to_string(&rec).unwrap_or_else(|_| format!("message = {:?}\n", rec.message));
    eprint!("{text}");
    if let Some(cfg) = cfg {
        let dir = cfg.run_dir();
        if std::fs::create_dir_all(&dir).is_ok() {
            let _ = std::fs::write(dir.join("failure.toml"), &text);
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (name, runner, common, flags) = Cli::parse().command.split();
    let cfg = match resolve(name, common, flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            report_failure(name, None, &e);
            return ExitCode::from(e.code());
        }
    };
    log::info!("running {name} with {:?}", cfg.knobs);
    match runner(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_failure(name, Some(&cfg), &e);
            ExitCode::from(e.code())
        }
    }
}

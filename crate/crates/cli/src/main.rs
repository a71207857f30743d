//! `knudsen`: batch runner for billiard simulations and their statistical checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use clap::{Args, Parser, Subcommand};
use knudsen_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

use config::{ExperimentConfig, Kind, Method, Mode};

/// Exit status classes.
#[derive(Debug)]
pub enum Failure {
    /// Exit 2.
    Config(String),
    /// Exit 1.
    Runtime(String),
    /// Exit 3; carries the failing reports.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidProfile(_)
            | Error::InvalidParameter(_)
            | Error::UnknownLemma(_)
            | Error::Budget(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "knudsen",
    version,
    about = "Lambertian billiards in thin annular tubes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate reflection sequences and write event CSVs.
    Simulate(SimulateArgs),
    /// Run lemma checks and write JSON reports.
    Verify(VerifyArgs),
    /// Compare rescaled billiard marginals with the limiting diffusion.
    Invariance(InvarianceArgs),
    /// Sample the limiting diffusion on a time grid.
    Sde(SdeArgs),
    /// Check a tube profile for admissibility.
    ValidateProfile(ProfileArgs),
    /// Repeat the run recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct Common {
    /// TOML file with experiment keys; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: KNUDSEN_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    epsilon: Option<f64>,
}

impl Common {
    fn base(&self, kind: Kind) -> ExperimentConfig {
        ExperimentConfig {
            kind: Some(kind),
            seed: self.seed,
            out_dir: self.out.clone(),
            mode: self.mode,
            epsilon: self.epsilon,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Reflections per path.
    #[arg(long)]
    steps: Option<u64>,
    /// Physical time to simulate past.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Rescaled times at which to record the angle.
    #[arg(long, value_delimiter = ',')]
    s_grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Starting angle.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Starting side: 0 outer, 1 inner.
    #[arg(long)]
    side0: Option<u8>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "lemma")]
    lemmas: Vec<String>,
    #[arg(long, conflicts_with = "lemmas")]
    all: bool,
    /// Width ladder, overriding `--epsilon`.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    mc_epsilon: Option<f64>,
    /// Cap on estimated work.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args)]
struct InvarianceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    s_grid: Option<Vec<f64>>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    /// Step of the diffusion reference.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args)]
struct SdeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RerunArgs {
    manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn layered(common: &Common, cli: ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    let file = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let (Some(a), Some(b)) = (file.kind, cli.kind) {
        if a != b {
            return Err(Failure::Config(format!(
                "config file is for {a:?}, not {b:?}"
            )));
        }
    }
    file.overlay(cli).resolved()
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (config, threads) = match cli.command {
        Command::Simulate(a) => {
            let c = ExperimentConfig {
                steps: a.steps,
                horizon: a.horizon,
                paths: a.paths,
                s_grid: a.s_grid,
                method: a.method,
                x0: a.x0,
                side0: a.side0,
                ..a.common.base(Kind::Simulate)
            };
            (layered(&a.common, c)?, a.common.threads)
        }
        Command::Verify(a) => {
            let lemmas = if a.all {
                Some(vec!["all".to_string()])
            } else if a.lemmas.is_empty() {
                None
            } else {
                Some(a.lemmas)
            };
            let c = ExperimentConfig {
                lemmas,
                epsilons: a.epsilons,
                n: a.n,
                bins: a.bins,
                t: a.t,
                mc_epsilon: a.mc_epsilon,
                budget: a.budget,
                ..a.common.base(Kind::Verify)
            };
            (layered(&a.common, c)?, a.common.threads)
        }
        Command::Invariance(a) => {
            let c = ExperimentConfig {
                s_grid: a.s_grid,
                n_paths: a.n_paths,
                x0: a.x0,
                dt: a.dt,
                budget: a.budget,
                ..a.common.base(Kind::Invariance)
            };
            (layered(&a.common, c)?, a.common.threads)
        }
        Command::Sde(a) => {
            let c = ExperimentConfig {
                t_grid: a.t_grid,
                n_paths: a.n_paths,
                x0: a.x0,
                dt: a.dt,
                ..a.common.base(Kind::Sde)
            };
            (layered(&a.common, c)?, a.common.threads)
        }
        Command::ValidateProfile(a) => {
            let c = a.common.base(Kind::ValidateProfile);
            (layered(&a.common, c)?, a.common.threads)
        }
        Command::Rerun(a) => {
            let mut c = run::read_manifest(&a.manifest)?.config;
            if a.out.is_some() {
                c.out_dir = a.out;
            }
            (c.resolved()?, a.threads)
        }
    };
    run::run(&config, threads)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Check(report)) => {
            println!("{report}");
            eprintln!("checks failed");
            ExitCode::from(3)
        }
    }
}

//! Command-line front end for the GB-CosFace toolkit.
//!
//! Every command reads a JSON config (or the defaults), applies `--set`
//! overrides, writes its outputs into `--out` and finishes with a
//! `run_manifest.json` that echoes the config and hashes every file. Passing
//! that manifest back as `--config` reproduces the outputs bitwise.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "gbcosface", version, about = "GB-CosFace loss family experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-difference, weighting, balance and equivalence checks.
    CheckGradients(Common),
    /// Train free embeddings on a synthetic spherical dataset.
    TrainToy(Common),
    /// Train and evaluate across a grid of alpha values.
    SweepAlpha(Common),
    /// Residual grids and traced decision boundaries on the 2-sphere.
    BoundaryMap(Common),
    /// Verification metrics for an embeddings CSV.
    EvalPairs(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config, or a run manifest from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a config value by dotted path, e.g. `loss.alpha=0.25`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckGradients(_) => "check-gradients",
            Command::TrainToy(_) => "train-toy",
            Command::SweepAlpha(_) => "sweep-alpha",
            Command::BoundaryMap(_) => "boundary-map",
            Command::EvalPairs(_) => "eval-pairs",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::CheckGradients(c)
            | Command::TrainToy(c)
            | Command::SweepAlpha(c)
            | Command::BoundaryMap(c)
            | Command::EvalPairs(c) => c,
        }
    }
}

/// Runs one command and returns the manifest path.
pub fn run(cmd: &Command) -> Result<PathBuf> {
    let c = cmd.common();
    let name = cmd.name();
    let path = c.config.as_deref();
    match cmd {
        Command::CheckGradients(_) => commands::check_gradients(&config::load(path, name, &c.set)?, &c.out),
        Command::TrainToy(_) => commands::train_toy(&config::load(path, name, &c.set)?, &c.out),
        Command::SweepAlpha(_) => commands::sweep_alpha(&config::load(path, name, &c.set)?, &c.out),
        Command::BoundaryMap(_) => commands::boundary_map(&config::load(path, name, &c.set)?, &c.out),
        Command::EvalPairs(_) => commands::eval_pairs(&config::load(path, name, &c.set)?, &c.out),
    }
}

//! Experiment driver: one JSON config per run, outputs written to a
//! content-addressed directory together with a result envelope.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod envelope;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "complab", version, about = "Numerical experiments on composite materials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Base seed for randomized searches.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    pub out: PathBuf,
    /// Recompute even when a cached result exists.
    #[arg(long, global = true)]
    pub force: bool,
    /// Solver / check tolerance override.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective tensors and constraint checks of hierarchical laminates.
    Laminate,
    /// Periodic cell solves on pixel/voxel geometries.
    Cell,
    /// Bound gaps for two-well energies.
    Twowell,
    /// Elastic bound formulas and the phase-interchange inequality.
    Bounds,
    /// Write a named geometry to a file.
    GenerateGeometry {
        /// Generator string such as `random(7,0.5)@64`.
        spec: Option<String>,
        /// `dense` or `rle`.
        #[arg(long)]
        encoding: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Laminate => "laminate",
            Command::Cell => "cell",
            Command::Twowell => "twowell",
            Command::Bounds => "bounds",
            Command::GenerateGeometry { .. } => "generate-geometry",
        }
    }
}

/// Runs one subcommand and returns the directory holding its outputs.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Input("--jobs must be at least 1".into()));
        }
        // Ignore the error when a pool already exists (repeated calls in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Input(format!("--tol must lie in (0, 1), got {t}")));
        }
    }
    let ctx = commands::Context {
        seed: cli.seed,
        tol: cli.tol,
    };
    let prepared = match &cli.command {
        Command::Laminate => commands::laminate::prepare(cli.config.as_deref(), &ctx)?,
        Command::Cell => commands::cell::prepare(cli.config.as_deref(), &ctx)?,
        Command::Twowell => commands::twowell::prepare(cli.config.as_deref(), &ctx)?,
        Command::Bounds => commands::bounds::prepare(cli.config.as_deref(), &ctx)?,
        Command::GenerateGeometry { spec, encoding } => {
            commands::geometry::prepare(cli.config.as_deref(), spec.as_deref(), encoding.as_deref())?
        }
    };
    envelope::execute(cli.command.name(), prepared, &cli.out, cli.force)
}

//! `twowell`: lower/upper bound gaps of a two-well energy over a grid of
//! average fields.

use std::path::Path;

use complab_core::tensor::Field2n;
use complab_core::twowell::{self, BoundBudget, LowerBoundOptions, TwoWellSpec};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::Context;
use crate::config::{load_config, Source};
use crate::envelope::{Payload, Prepared};
use crate::error::{CliError, Result};

/// Slack allowed before `lower > upper` counts as a broken invariant.
pub const ORDER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(default = "d_starts")]
    pub starts: usize,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_rank")]
    pub max_rank: usize,
    #[serde(default = "d_restarts")]
    pub restarts: usize,
    #[serde(default = "d_sweeps")]
    pub sweeps: usize,
}

fn d_starts() -> usize {
    16
}
fn d_iterations() -> usize {
    200
}
fn d_rank() -> usize {
    2
}
fn d_restarts() -> usize {
    4
}
fn d_sweeps() -> usize {
    6
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            starts: d_starts(),
            iterations: d_iterations(),
            max_rank: d_rank(),
            restarts: d_restarts(),
            sweeps: d_sweeps(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoWellConfig {
    pub spec: Source<TwoWellSpec>,
    /// One `[min, max, count]` per entry of F, row-major.
    #[serde(default)]
    pub grid: Option<Vec<(f64, f64, usize)>>,
    /// Explicit average fields, each row-major with `2m` entries.
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub budget: Budget,
    /// Filled from `--seed`.
    #[serde(default)]
    pub seed: u64,
}

pub fn prepare(path: Option<&Path>, ctx: &Context) -> Result<Prepared> {
    let (mut cfg, base): (TwoWellConfig, _) = load_config(path, "twowell")?;
    cfg.seed = ctx.seed;
    let spec = cfg.spec.load(&base)?;
    spec.value.validate()?;
    let m = spec.value.m;
    let grid = match (&cfg.grid, &cfg.points) {
        (Some(r), None) => twowell::grid_from_ranges(m, r)?,
        (None, Some(pts)) => pts
            .iter()
            .map(|p| {
                if p.len() != 2 * m {
                    return Err(CliError::Input(format!("point {p:?} needs {} entries", 2 * m)));
                }
                Ok(Field2n::from_rows(&p[..m], &p[m..])?)
            })
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(CliError::Input("give exactly one of grid and points".into())),
    };
    if grid.is_empty() {
        return Err(CliError::Input("the F grid is empty".into()));
    }
    if cfg.budget.starts == 0 || cfg.budget.restarts == 0 {
        return Err(CliError::Input("budget starts and restarts must be positive".into()));
    }
    let inputs = vec![("spec".to_string(), spec.digest)];
    let spec = spec.value;
    let run_cfg = cfg.clone();
    Prepared::new(&cfg, inputs, Box::new(move || run(&spec, &grid, &run_cfg)))
}

fn run(spec: &TwoWellSpec, grid: &[Field2n], cfg: &TwoWellConfig) -> Result<Payload> {
    let b = &cfg.budget;
    let budget = BoundBudget {
        lower: LowerBoundOptions {
            starts: b.starts,
            iterations: b.iterations,
            seed: cfg.seed,
        },
        max_rank: b.max_rank,
        restarts: b.restarts,
        sweeps: b.sweeps,
    };
    let report = twowell::gap_scan(spec, grid, &budget)?;
    let violations = report.records.iter().filter(|r| r.gap < -ORDER_TOL).count();
    let summary = json!({
        "points": report.records.len(),
        "max_gap": report.max_gap,
        "argmax": report.argmax,
        "min_gap": report.min_gap,
        "order_violations": violations,
        "budget": b,
        "seed": cfg.seed,
        "caveat": report.caveat,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Invariant(e.to_string()))?;
    let violation = (violations > 0).then(|| {
        format!(
            "lower bound exceeds upper bound at {violations} grid point(s), min gap {}",
            report.min_gap
        )
    });
    Ok(Payload {
        files: vec![
            ("gap_scan.csv".to_string(), report.to_csv(spec.m)),
            ("summary.json".to_string(), text + "\n"),
        ],
        violation,
    })
}

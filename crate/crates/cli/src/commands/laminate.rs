//! `laminate`: σ sweeps, constraint checks and leaf-field statistics of a
//! laminate tree.

use std::path::Path;

use complab_core::analytic::{self, CheckReport, ConductivitySample, FdOptions, Provenance};
use complab_core::laminate::{self, LaminateTree};
use complab_core::tensor::{BlockTensor, Field2n};
use complab_core::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{append_column, checks_csv, failed, Context};
use crate::config::{load_config, num, ComplexIn, Source};
use crate::envelope::{Payload, Prepared};
use crate::error::{CliError, Result};

fn default_sigma() -> Vec<ComplexIn> {
    vec![ComplexIn::Real(2.0), ComplexIn::Real(5.0), ComplexIn::Real(10.0)]
}

fn default_herglotz() -> Vec<ComplexIn> {
    vec![
        ComplexIn::Pair([1.0, 1.0]),
        ComplexIn::Pair([3.0, 0.5]),
        ComplexIn::Pair([-2.0, 1.0]),
        ComplexIn::Pair([0.2, 4.0]),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaminateConfig {
    pub tree: Source<LaminateTree>,
    #[serde(default = "default_sigma")]
    pub sigma: Vec<ComplexIn>,
    /// Upper-half-plane points for the Herglotz check.
    #[serde(default = "default_herglotz")]
    pub herglotz_sigma: Vec<ComplexIn>,
    /// Optional general phase tensors; `effective.json` is written when both are given.
    #[serde(default)]
    pub l1: Option<BlockTensor>,
    #[serde(default)]
    pub l2: Option<BlockTensor>,
    /// Tolerance of the duality check; defaults to the laminate tolerance.
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Serialize)]
struct Effective<'a> {
    l_star: &'a BlockTensor,
    symmetry_residual: f64,
}

pub fn prepare(path: Option<&Path>, ctx: &Context) -> Result<Prepared> {
    let (mut cfg, base): (LaminateConfig, _) = load_config(path, "laminate")?;
    if ctx.tol.is_some() {
        cfg.tol = ctx.tol;
    }
    let tree = cfg.tree.load(&base)?;
    tree.value.validate()?;
    if cfg.sigma.is_empty() {
        return Err(CliError::Input("sigma sweep is empty".into()));
    }
    if cfg.l1.is_some() != cfg.l2.is_some() {
        return Err(CliError::Input("give both l1 and l2 or neither".into()));
    }
    let inputs = vec![("tree".to_string(), tree.digest)];
    let tree = tree.value;
    let run_cfg = cfg.clone();
    Prepared::new(&cfg, inputs, Box::new(move || run(&tree, &run_cfg)))
}

fn run(tree: &LaminateTree, cfg: &LaminateConfig) -> Result<Payload> {
    let f = laminate::volume_fraction(tree);
    let sigmas: Vec<Complex64> = cfg.sigma.iter().map(|s| s.value()).collect();
    let func = |s: Complex64| laminate::sigma_star(tree, s);

    let rows: Vec<Result<(ConductivitySample, f64, CheckReport)>> = sigmas
        .par_iter()
        .map(|&s| {
            let sample = ConductivitySample::new(s, func(s)?, f, Provenance::Laminate)?;
            let kd = analytic::keller_dykhne_check(&func, s, Provenance::Laminate, cfg.tol)?;
            Ok((sample, kd.residual, kd))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let samples: Vec<ConductivitySample> = rows.iter().map(|r| r.0.clone()).collect();
    let kd: Vec<String> = rows.iter().map(|r| num(r.1)).collect();
    let sweep = append_column(&analytic::sweep_csv(&samples), "kd_residual", &kd);

    let mut reports: Vec<CheckReport> = rows.into_iter().map(|r| r.2).collect();
    let herglotz: Vec<ConductivitySample> = cfg
        .herglotz_sigma
        .iter()
        .map(|s| {
            let s = s.value();
            if !(s.im > 0.0) {
                return Err(CliError::Input(format!("herglotz_sigma {s} is not in the upper half-plane")));
            }
            Ok(ConductivitySample::new(s, func(s)?, f, Provenance::Laminate)?)
        })
        .collect::<Result<_>>()?;
    if !herglotz.is_empty() {
        reports.push(analytic::herglotz_check(&herglotz, None)?);
    }
    let fd = FdOptions {
        slope_tol: 1e-5,
        ..FdOptions::default()
    };
    reports.push(analytic::normalization_check(&func, f, Provenance::Laminate, &fd)?);
    let bad = failed(&reports);
    if !bad.is_empty() {
        log::warn!("failed checks: {}", bad.join(", "));
    }

    // det E of the leaves for ⟨E⟩ = I, phases σI and I with n = 2
    let mut leaf = String::from("sigma_re,sigma_im,leaves,min_det\n");
    let e0 = Field2n::identity(2);
    let leaf_rows: Vec<Result<String>> = sigmas
        .par_iter()
        .map(|&s| {
            let l1 = BlockTensor::identity(2).scale(s);
            let report = laminate::leaf_fields(tree, &l1, &BlockTensor::identity(2), &e0)?;
            Ok(format!(
                "{},{},{},{}\n",
                num(s.re),
                num(s.im),
                report.leaves.len(),
                report.min_det.map_or_else(String::new, num)
            ))
        })
        .collect();
    for r in leaf_rows {
        leaf.push_str(&r?);
    }

    let mut files = vec![
        ("sigma_star.csv".to_string(), sweep),
        ("checks.csv".to_string(), checks_csv(&reports)),
        ("leaf_fields.csv".to_string(), leaf),
    ];
    if let (Some(l1), Some(l2)) = (&cfg.l1, &cfg.l2) {
        let l_star = laminate::effective_tensor(tree, l1, l2)?;
        let doc = Effective {
            l_star: &l_star,
            symmetry_residual: l_star.symmetry_residual(),
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Invariant(e.to_string()))?;
        files.push(("effective.json".to_string(), text + "\n"));
    }
    Ok(Payload { files, violation: None })
}

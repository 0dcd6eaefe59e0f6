//! `cell`: effective conductivities of pixel/voxel geometries, constraint
//! checks, field diagnostics and Hall coefficients.

use std::path::Path;

use complab_cell::{
    cofactor_diagnostics, hall_coefficient, sigma_star_closure, CellProblem, HallMethod, HallOptions, MatrixField,
    PhaseTensor, Scheme, SolverOptions, Summary,
};
use complab_core::analytic::{self, CheckReport, ConductivitySample, FdOptions, Provenance};
use complab_core::geometry::CellGeometry;
use complab_core::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{append_column, checks_csv, failed, Context};
use crate::config::{num, read_text, sha256_hex, ComplexIn};
use crate::envelope::{Payload, Prepared};
use crate::error::{CliError, Result};

fn default_sigma() -> Vec<ComplexIn> {
    vec![ComplexIn::Real(2.0)]
}

fn default_checks() -> Vec<String> {
    vec!["normalization".into(), "keller_dykhne".into(), "herglotz".into()]
}

fn default_scheme() -> String {
    "rotated".into()
}

fn default_solver_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HallConfig {
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "one")]
    pub r_h: f64,
    #[serde(default = "default_h")]
    pub h: [f64; 3],
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
}

fn one() -> f64 {
    1.0
}

fn default_h() -> [f64; 3] {
    [0.0, 0.0, 1e-4]
}

fn default_delta() -> f64 {
    1e-6
}

fn default_methods() -> Vec<String> {
    vec!["perturbation".into()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    /// Generator string such as `checkerboard@256`.
    #[serde(default)]
    pub geometry: Option<String>,
    /// Geometry file, relative to the config file.
    #[serde(default)]
    pub geometry_file: Option<String>,
    #[serde(default = "default_sigma")]
    pub sigma: Vec<ComplexIn>,
    /// Any of `normalization`, `keller_dykhne` (2D), `herglotz`,
    /// `second_derivative` (3D).
    #[serde(default = "default_checks")]
    pub checks: Vec<String>,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Writes det / tr cof statistics of the field matrix at the first σ.
    #[serde(default)]
    pub cofactor: bool,
    /// Writes the per-voxel field matrices at the first σ.
    #[serde(default)]
    pub dump_fields: bool,
    #[serde(default)]
    pub hall: Option<HallConfig>,
}

fn scheme(name: &str) -> Result<Scheme> {
    match name {
        "rotated" => Ok(Scheme::Rotated),
        "gauss" => Ok(Scheme::Gauss),
        other => Err(CliError::Input(format!("unknown scheme {other:?} (rotated, gauss)"))),
    }
}

fn method(name: &str) -> Result<HallMethod> {
    match name {
        "direct" => Ok(HallMethod::Direct),
        "perturbation" => Ok(HallMethod::Perturbation),
        other => Err(CliError::Input(format!("unknown Hall method {other:?} (direct, perturbation)"))),
    }
}

pub fn prepare(path: Option<&Path>, ctx: &Context) -> Result<Prepared> {
    let (mut cfg, base): (CellConfig, _) = crate::config::load_config(path, "cell")?;
    if let Some(t) = ctx.tol {
        cfg.solver_tol = t;
    }
    let (geom, inputs) = match (&cfg.geometry, &cfg.geometry_file) {
        (Some(spec), None) => (CellGeometry::generate(spec)?, Vec::new()),
        (None, Some(file)) => {
            let path = base.join(file);
            let text = read_text(&path)?;
            let g = CellGeometry::from_json(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            (g, vec![("geometry".to_string(), sha256_hex(text.as_bytes()))])
        }
        _ => return Err(CliError::Input("give exactly one of geometry and geometry_file".into())),
    };
    if cfg.sigma.is_empty() {
        return Err(CliError::Input("sigma sweep is empty".into()));
    }
    let opts = SolverOptions {
        tol: cfg.solver_tol,
        max_iter: cfg.max_iter,
        scheme: scheme(&cfg.scheme)?,
    };
    for c in &cfg.checks {
        if !matches!(c.as_str(), "normalization" | "keller_dykhne" | "herglotz" | "second_derivative") {
            return Err(CliError::Input(format!("unknown check {c:?}")));
        }
    }
    if let Some(h) = &cfg.hall {
        for m in &h.methods {
            method(m)?;
        }
        if geom.dim() != 3 {
            return Err(CliError::Input("Hall coefficients need a 3D geometry".into()));
        }
    }
    let run_cfg = cfg.clone();
    Prepared::new(&cfg, inputs, Box::new(move || run(&geom, &run_cfg, opts)))
}

fn summary_json(s: &Summary) -> serde_json::Value {
    json!({"min": s.min, "max": s.max, "negative_fraction": s.negative_fraction})
}

fn run(geom: &CellGeometry, cfg: &CellConfig, opts: SolverOptions) -> Result<Payload> {
    let dim = geom.dim();
    let f = geom.volume_fraction();
    let func = sigma_star_closure(geom.clone(), opts);
    let sigmas: Vec<Complex64> = cfg.sigma.iter().map(|s| s.value()).collect();
    let want = |c: &str| cfg.checks.iter().any(|x| x == c);

    let mut samples = Vec::with_capacity(sigmas.len());
    let mut reports: Vec<CheckReport> = Vec::new();
    let mut kd = Vec::new();
    for &s in &sigmas {
        samples.push(ConductivitySample::new(s, func(s)?, f, Provenance::Cell)?);
        if dim == 2 && want("keller_dykhne") {
            let r = analytic::keller_dykhne_check(&func, s, Provenance::Cell, None)?;
            kd.push(num(r.residual));
            reports.push(r);
        }
    }
    let mut sweep = analytic::sweep_csv(&samples);
    if kd.len() == samples.len() {
        sweep = append_column(&sweep, "kd_residual", &kd);
    }
    if want("herglotz") {
        let upper: Vec<ConductivitySample> = samples.iter().filter(|s| s.sigma.im > 0.0).cloned().collect();
        if upper.is_empty() {
            let s = Complex64::new(1.0, 1.0);
            reports.push(analytic::herglotz_check(
                &[ConductivitySample::new(s, func(s)?, f, Provenance::Cell)?],
                None,
            )?);
        } else {
            reports.push(analytic::herglotz_check(&upper, None)?);
        }
    }
    let fd = FdOptions {
        identity_tol: 1e-3,
        slope_tol: 1e-3,
        ..FdOptions::default()
    };
    if want("normalization") {
        reports.push(analytic::normalization_check(&func, f, Provenance::Cell, &fd)?);
    }
    if dim == 3 && want("second_derivative") {
        reports.push(analytic::second_derivative_check(&func, f, Provenance::Cell, &fd)?);
    }
    let bad = failed(&reports);
    if !bad.is_empty() {
        log::warn!("failed checks: {}", bad.join(", "));
    }

    let mut files = vec![
        ("sigma_star.csv".to_string(), sweep),
        ("checks.csv".to_string(), checks_csv(&reports)),
    ];

    if cfg.cofactor || cfg.dump_fields {
        // field matrix E(x) with ⟨E⟩ = I at the first σ, same rotation as σ*
        let s = sigmas[0];
        let rot = Complex64::from_polar(1.0, -0.5 * s.arg());
        let problem = CellProblem::new(
            geom,
            &PhaseTensor::scalar(dim, s * rot),
            &PhaseTensor::scalar(dim, rot),
            opts,
        )?;
        let field = MatrixField::from_columns(&problem.basis_solutions()?)?;
        if cfg.cofactor {
            let rep = cofactor_diagnostics(&field);
            let doc = json!({
                "sigma": [s.re, s.im],
                "dim": rep.dim,
                "det": summary_json(&rep.det),
                "tr_cof": rep.tr_cof.as_ref().map(summary_json),
            });
            files.push(("cofactor.json".to_string(), pretty(&doc)?));
        }
        if cfg.dump_fields {
            let mut header = vec!["cell".to_string()];
            for i in 0..dim {
                for j in 0..dim {
                    header.push(format!("E{}{}", i + 1, j + 1));
                }
            }
            let mut out = header.join(",");
            out.push('\n');
            for cell in 0..field.cells() {
                let m = field.matrix(cell);
                let mut row = vec![cell.to_string()];
                for i in 0..dim {
                    for j in 0..dim {
                        row.push(num(m[(i, j)]));
                    }
                }
                out.push_str(&row.join(","));
                out.push('\n');
            }
            files.push(("fields.csv".to_string(), out));
        }
    }

    if let Some(h) = &cfg.hall {
        let hopts = HallOptions {
            delta: h.delta,
            solver: opts,
        };
        let mut results = Vec::new();
        for name in &h.methods {
            let rep = hall_coefficient(geom, h.rho, h.r_h, h.h, method(name)?, &hopts)?;
            results.push(json!({
                "method": rep.method.name(),
                "r_star": rep.r_star,
                "sign_reversed": rep.r_star * h.r_h < 0.0,
                "ratio": rep.r_star / h.r_h,
                "iterations": rep.iterations,
            }));
        }
        let signs: Vec<f64> = results.iter().filter_map(|r| r["r_star"].as_f64()).collect();
        let doc = json!({
            "rho": h.rho,
            "r_h": h.r_h,
            "h": h.h,
            "delta": h.delta,
            "volume_fraction": f,
            "cubic": geom.has_cubic_symmetry(),
            "results": results,
            "sign_statistics": {
                "methods": signs.len(),
                "negative": signs.iter().filter(|&&r| r * h.r_h < 0.0).count(),
                "positive": signs.iter().filter(|&&r| r * h.r_h > 0.0).count(),
            },
        });
        files.push(("hall.json".to_string(), pretty(&doc)?));
    }
    Ok(Payload { files, violation: None })
}

fn pretty(v: &serde_json::Value) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Invariant(e.to_string()))
}

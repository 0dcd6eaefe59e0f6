//! `bounds`: planar elastic extreme-polycrystal formulas and sweeps of the
//! phase-interchange inequality on coated-sphere oracles.

use std::path::Path;

use complab_core::analytic::{self, Core, Provenance};
use complab_core::elastic::{self, IsoElastic, Variant};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::Context;
use crate::config::{load_config, num, Modulus};
use crate::envelope::{Payload, Prepared};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub kappa: Modulus,
    pub mu: f64,
}

impl Phase {
    fn iso(&self) -> Result<IsoElastic> {
        Ok(IsoElastic::new(self.kappa.value()?, self.mu)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sliced {
    pub kappa: Modulus,
    pub mu: f64,
    pub eps: f64,
    #[serde(default)]
    pub c: f64,
}

fn both_variants() -> Vec<Variant> {
    vec![Variant::AsPrinted, Variant::C1122Variant]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interchange {
    pub fractions: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default = "three")]
    pub dim: usize,
    #[serde(default = "core1")]
    pub core: Core,
    #[serde(default = "pi_tol")]
    pub tol: f64,
}

fn three() -> usize {
    3
}
fn core1() -> Core {
    Core::CorePhase1
}
fn pi_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Phases for the auxetic (κ* = 0) limit.
    #[serde(default)]
    pub auxetic: Vec<Phase>,
    /// Sliced materials fed to the extreme-polycrystal formulas.
    #[serde(default)]
    pub polycrystal: Vec<Sliced>,
    #[serde(default = "both_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub phase_interchange: Option<Interchange>,
}

pub fn prepare(path: Option<&Path>, ctx: &Context) -> Result<Prepared> {
    let (mut cfg, _): (BoundsConfig, _) = load_config(path, "bounds")?;
    if let (Some(t), Some(pi)) = (ctx.tol, cfg.phase_interchange.as_mut()) {
        pi.tol = t;
    }
    for p in &cfg.auxetic {
        p.iso()?;
    }
    if let Some(pi) = &cfg.phase_interchange {
        if pi.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || pi.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(CliError::Input("phase_interchange needs fractions in [0, 1] and sigma > 0".into()));
        }
        if !matches!(pi.dim, 2 | 3) {
            return Err(CliError::Input(format!("phase_interchange dim must be 2 or 3, got {}", pi.dim)));
        }
    }
    let run_cfg = cfg.clone();
    Prepared::new(&cfg, Vec::new(), Box::new(move || run(&run_cfg)))
}

fn run(cfg: &BoundsConfig) -> Result<Payload> {
    let mut records: Vec<Value> = Vec::new();
    for p in &cfg.auxetic {
        let phase = p.iso()?;
        let (k, m) = elastic::auxetic_limit(&phase);
        records.push(json!({
            "kind": "auxetic-limit",
            "inputs": p,
            "variant": null,
            "kappa_star": k,
            "mu_star": m,
        }));
    }
    for s in &cfg.polycrystal {
        let phase = IsoElastic::new(s.kappa.value()?, s.mu)?;
        let mat = elastic::sliced_material(&phase, s.eps, s.c)?;
        for &v in &cfg.variants {
            let ex = elastic::polycrystal_extremes(&mat, v)?;
            let mut rec = json!({
                "kind": "polycrystal",
                "inputs": s,
                "variant": v.name(),
                "kappa_star": ex.kappa_star,
                "mu_star": ex.mu_star,
            });
            if v == Variant::AsPrinted {
                rec["kappa_limit"] = json!(elastic::as_printed_kappa_limit(&phase)?);
            }
            records.push(rec);
        }
    }
    let text = serde_json::to_string_pretty(&records).map_err(|e| CliError::Invariant(e.to_string()))?;
    let mut files = vec![("records.json".to_string(), text + "\n")];

    if let Some(pi) = &cfg.phase_interchange {
        let mut csv = String::from("f,sigma,lhs,pass\n");
        for &f in &pi.fractions {
            let func = analytic::coated_sphere_fn(f, pi.dim, pi.core);
            for &s in &pi.sigma {
                let r = analytic::phase_interchange_check(&func, s, Provenance::Oracle, pi.tol)?;
                csv.push_str(&format!("{},{},{},{}\n", num(f), num(s), num(r.value.unwrap_or(f64::NAN)), r.passed));
            }
        }
        files.push(("phase_interchange.csv".to_string(), csv));
    }
    Ok(Payload { files, violation: None })
}

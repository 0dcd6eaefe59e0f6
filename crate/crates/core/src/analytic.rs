//! Constraints every effective conductivity function must satisfy.
//!
//! Each check consumes either precomputed [`ConductivitySample`]s or a
//! callable `σ ↦ σ*(σ)` (the phase-1 conductivity σ against a background
//! of conductivity 1) and produces a [`CheckReport`]. Tolerances depend on
//! where the samples came from: laminates are exact, pixel solves carry
//! discretization error.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::linalg::{self, CMatrix};

/// A callable effective conductivity function.
pub type SigmaStarFn<'a> = dyn Fn(Complex64) -> Result<CMatrix> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Laminate,
    Cell,
    Oracle,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Laminate => "laminate",
            Provenance::Cell => "cell",
            Provenance::Oracle => "oracle",
        })
    }
}

impl Provenance {
    fn herglotz_tol(self) -> f64 {
        match self {
            Provenance::Cell => 1e-6,
            _ => 1e-10,
        }
    }

    fn duality_tol(self) -> f64 {
        match self {
            Provenance::Cell => 1e-2,
            _ => 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConductivitySample {
    pub sigma: Complex64,
    pub sigma_star: CMatrix,
    pub f: f64,
    pub provenance: Provenance,
}

impl ConductivitySample {
    pub fn new(sigma: Complex64, sigma_star: CMatrix, f: f64, provenance: Provenance) -> Result<Self> {
        let d = sigma_star.nrows();
        if !(d == 2 || d == 3) || sigma_star.ncols() != d {
            return Err(CoreError::Evaluation(format!(
                "sigma_star must be 2x2 or 3x3, got {}x{}",
                sigma_star.nrows(),
                sigma_star.ncols()
            )));
        }
        if sigma_star.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(CoreError::Evaluation("sigma_star has non-finite entries".into()));
        }
        if !(0.0..=1.0).contains(&f) {
            return Err(CoreError::Evaluation(format!("volume fraction {f} outside [0, 1]")));
        }
        Ok(Self {
            sigma,
            sigma_star,
            f,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma_star.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub provenance: Provenance,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    /// The quantity the check is built on, when it has one (e.g. the
    /// left-hand side of the phase-interchange inequality).
    pub value: Option<f64>,
    pub inputs_digest: String,
}

impl CheckReport {
    pub const CSV_HEADER: &'static str = "check,provenance,residual,tolerance,pass";

    fn new(check: &str, provenance: Provenance, residual: f64, tolerance: f64, passed: bool, digest: String) -> Self {
        Self {
            check: check.to_string(),
            provenance,
            passed,
            residual,
            tolerance,
            value: None,
            inputs_digest: digest,
        }
    }

    fn with_value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.check,
            self.provenance,
            crate::csv_number(self.residual),
            crate::csv_number(self.tolerance),
            self.passed
        )
    }
}

fn digest(parts: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.to_bits().to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn matrix_bits(m: &CMatrix) -> Vec<f64> {
    m.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// `tr(σ*)/d`.
pub fn scalar_part(m: &CMatrix) -> Complex64 {
    m.trace() / Complex64::new(m.nrows() as f64, 0.0)
}

/// Largest deviation of `m` from `scalar_part(m)·I`, relative to the scalar part.
pub fn anisotropy(m: &CMatrix) -> f64 {
    let s = scalar_part(m);
    let iso = CMatrix::identity(m.nrows(), m.ncols()) * s;
    linalg::max_abs(&(m - iso)) / s.norm().max(f64::MIN_POSITIVE)
}

fn warn_anisotropic(check: &str, m: &CMatrix) {
    let a = anisotropy(m);
    if a > 0.01 {
        log::warn!("{check}: sigma_star is anisotropic ({:.2}%), the identity presumes isotropy", 100.0 * a);
    }
}

fn identity_like(m: &CMatrix) -> CMatrix {
    CMatrix::identity(m.nrows(), m.ncols())
}

/// Im σ* must be positive semidefinite whenever Im σ > 0.
pub fn herglotz_check(samples: &[ConductivitySample], tol: Option<f64>) -> Result<CheckReport> {
    let mut worst = f64::INFINITY;
    let mut passed = true;
    let mut tolerance: f64 = 0.0;
    let mut bits = Vec::new();
    for s in samples {
        if !(s.sigma.im > 0.0) {
            return Err(CoreError::WrongHalfPlane(s.sigma.im));
        }
        let t = tol.unwrap_or_else(|| s.provenance.herglotz_tol());
        tolerance = tolerance.max(t);
        let lmin = linalg::min_sym_eigenvalue(&linalg::imag_part(&s.sigma_star));
        passed &= lmin >= -t;
        worst = worst.min(lmin);
        bits.extend([s.sigma.re, s.sigma.im]);
        bits.extend(matrix_bits(&s.sigma_star));
    }
    let provenance = samples.first().map_or(Provenance::Oracle, |s| s.provenance);
    Ok(CheckReport::new("herglotz", provenance, (-worst).max(0.0), tolerance, passed, digest(&bits)).with_value(worst))
}

/// Step sizes and tolerances for the derivative-based checks.
#[derive(Debug, Clone, Copy)]
pub struct FdOptions {
    pub first_step: f64,
    pub second_step: f64,
    pub identity_tol: f64,
    pub slope_tol: f64,
    pub second_rel_tol: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            first_step: 1e-5,
            second_step: 1e-3,
            identity_tol: 1e-12,
            slope_tol: 1e-4,
            second_rel_tol: 0.05,
        }
    }
}

/// `σ*(1) = I` and `dσ*/dσ(1) = f I`.
pub fn normalization_check(
    sigma_star: &SigmaStarFn,
    f: f64,
    provenance: Provenance,
    opts: &FdOptions,
) -> Result<CheckReport> {
    let one = Complex64::new(1.0, 0.0);
    let h = opts.first_step;
    let at_one = sigma_star(one)?;
    let id = identity_like(&at_one);
    let dev_identity = linalg::max_abs(&(&at_one - &id));
    let plus = sigma_star(Complex64::new(1.0 + h, 0.0))?;
    let minus = sigma_star(Complex64::new(1.0 - h, 0.0))?;
    let slope = (plus - minus) / Complex64::new(2.0 * h, 0.0);
    let dev_slope = linalg::max_abs(&(slope - id * Complex64::new(f, 0.0)));
    let passed = dev_identity <= opts.identity_tol && dev_slope <= opts.slope_tol;
    Ok(CheckReport::new(
        "normalization",
        provenance,
        dev_identity.max(dev_slope),
        opts.slope_tol,
        passed,
        digest(&[f, h]),
    ))
}

/// Relative residual of `σ*(1/σ) = R⊥ σ*(σ)⁻¹ R⊥ᵀ` for a 2×2 σ*.
pub fn keller_dykhne_residual(direct: &CMatrix, inverse_contrast: &CMatrix) -> Result<f64> {
    if direct.nrows() != 2 {
        return Err(CoreError::Dimension {
            expected: 2,
            got: direct.nrows(),
        });
    }
    let inv = linalg::cinverse(direct, "sigma_star")?;
    let rp = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        ],
    );
    let dual = &rp * inv * rp.transpose();
    Ok(linalg::frobenius(&(inverse_contrast - dual)) / linalg::frobenius(inverse_contrast))
}

pub fn keller_dykhne_check(
    sigma_star: &SigmaStarFn,
    sigma: Complex64,
    provenance: Provenance,
    tol: Option<f64>,
) -> Result<CheckReport> {
    let direct = sigma_star(sigma)?;
    if direct.nrows() != 2 {
        return Err(CoreError::Dimension {
            expected: 2,
            got: direct.nrows(),
        });
    }
    let dual = sigma_star(Complex64::new(1.0, 0.0) / sigma)?;
    let residual = keller_dykhne_residual(&direct, &dual)?;
    let tol = tol.unwrap_or_else(|| provenance.duality_tol());
    Ok(CheckReport::new(
        "keller_dykhne",
        provenance,
        residual,
        tol,
        residual <= tol,
        digest(&[sigma.re, sigma.im]),
    ))
}

/// `d²σ*/dσ²(1) = -2f(1-f)/3` for isotropic three-dimensional composites.
pub fn second_derivative_check(
    sigma_star: &SigmaStarFn,
    f: f64,
    provenance: Provenance,
    opts: &FdOptions,
) -> Result<CheckReport> {
    let h = opts.second_step;
    let mid = sigma_star(Complex64::new(1.0, 0.0))?;
    if mid.nrows() != 3 {
        return Err(CoreError::Dimension {
            expected: 3,
            got: mid.nrows(),
        });
    }
    let plus = sigma_star(Complex64::new(1.0 + h, 0.0))?;
    let minus = sigma_star(Complex64::new(1.0 - h, 0.0))?;
    warn_anisotropic("second_derivative", &plus);
    let d2 = (scalar_part(&plus) - 2.0 * scalar_part(&mid) + scalar_part(&minus)).re / (h * h);
    let target = -2.0 * f * (1.0 - f) / 3.0;
    let residual = if target.abs() > 1e-14 {
        (d2 - target).abs() / target.abs()
    } else {
        d2.abs()
    };
    Ok(CheckReport::new(
        "second_derivative",
        provenance,
        residual,
        opts.second_rel_tol,
        residual <= opts.second_rel_tol,
        digest(&[f, h]),
    )
    .with_value(d2))
}

/// Left-hand side `s(σ)s(1/σ) + (s(σ) + σ s(1/σ))/(σ + 1)` built from the
/// scalar parts `s` of σ*(σ) and σ*(1/σ).
pub fn phase_interchange_lhs(direct: f64, dual: f64, sigma: f64) -> f64 {
    direct * dual + (direct + sigma * dual) / (sigma + 1.0)
}

pub fn phase_interchange_check(
    sigma_star: &SigmaStarFn,
    sigma: f64,
    provenance: Provenance,
    tol: f64,
) -> Result<CheckReport> {
    if !(sigma > 0.0) {
        return Err(CoreError::Evaluation(format!("phase interchange needs sigma > 0, got {sigma}")));
    }
    let direct = sigma_star(Complex64::new(sigma, 0.0))?;
    let dual = sigma_star(Complex64::new(1.0 / sigma, 0.0))?;
    warn_anisotropic("phase_interchange", &direct);
    let lhs = phase_interchange_lhs(scalar_part(&direct).re, scalar_part(&dual).re, sigma);
    Ok(CheckReport::new(
        "phase_interchange",
        provenance,
        (2.0 - lhs).max(0.0),
        tol,
        lhs >= 2.0 - tol,
        digest(&[sigma]),
    )
    .with_value(lhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Core {
    CorePhase1,
    CorePhase2,
}

/// Coated sphere (d = 3) or coated disk (d = 2) assemblage of phase 1
/// (conductivity σ, volume fraction f) and phase 2 (conductivity 1).
pub fn coated_sphere_oracle(sigma: Complex64, f: f64, dim: usize, which: Core) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let (core, coat, fc) = match which {
        Core::CorePhase1 => (sigma, one, f),
        Core::CorePhase2 => (one, sigma, 1.0 - f),
    };
    let d = dim as f64;
    coat + d * fc * coat * (core - coat) / (d * coat + (1.0 - fc) * (core - coat))
}

/// σ*(σ) of a coated-sphere assemblage as a `dim`×`dim` multiple of the identity.
pub fn coated_sphere_fn(f: f64, dim: usize, which: Core) -> impl Fn(Complex64) -> Result<CMatrix> + Sync {
    move |s| Ok(CMatrix::identity(dim, dim) * coated_sphere_oracle(s, f, dim, which))
}

/// CSV of a σ sweep: `sigma_re,sigma_im` followed by real and imaginary
/// parts of each σ* entry in row-major order.
pub fn sweep_csv(samples: &[ConductivitySample]) -> String {
    let dim = samples.first().map_or(2, ConductivitySample::dim);
    let mut header = vec!["sigma_re".to_string(), "sigma_im".to_string()];
    for i in 0..dim {
        for j in 0..dim {
            header.push(format!("s{}{}_re", i + 1, j + 1));
            header.push(format!("s{}{}_im", i + 1, j + 1));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for s in samples {
        let mut row = vec![crate::csv_number(s.sigma.re), crate::csv_number(s.sigma.im)];
        for i in 0..dim {
            for j in 0..dim {
                let z = s.sigma_star[(i, j)];
                row.push(crate::csv_number(z.re));
                row.push(crate::csv_number(z.im));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Real symmetric part of a matrix-valued sample, for reporting.
pub fn real_sym(m: &CMatrix) -> DMatrix<f64> {
    linalg::sym(&linalg::real_part(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laminate::{self, LaminateTree};

    fn cz(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn homogeneous(dim: usize) -> impl Fn(Complex64) -> Result<CMatrix> + Sync {
        move |s| Ok(CMatrix::identity(dim, dim) * s)
    }

    #[test]
    fn herglotz_isotropic_and_violation() {
        let s = cz(1.0, 1.0);
        let ok = ConductivitySample::new(s, CMatrix::identity(2, 2) * s, 0.5, Provenance::Oracle).unwrap();
        let rep = herglotz_check(std::slice::from_ref(&ok), None).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.residual, 0.0);
        assert_eq!(rep.value, Some(1.0));

        let mut bad = CMatrix::zeros(2, 2);
        bad[(0, 0)] = cz(1.0, 1.0);
        bad[(1, 1)] = cz(1.0, -0.1);
        let bad = ConductivitySample::new(s, bad, 0.5, Provenance::Laminate).unwrap();
        let rep = herglotz_check(&[ok.clone(), bad], None).unwrap();
        assert!(!rep.passed);
        assert!((rep.residual - 0.1).abs() < 1e-15);

        let lower = ConductivitySample::new(cz(1.0, -1.0), CMatrix::identity(2, 2), 0.5, Provenance::Oracle).unwrap();
        assert!(matches!(herglotz_check(&[lower], None), Err(CoreError::WrongHalfPlane(_))));
    }

    #[test]
    fn normalization_homogeneous_and_stripes() {
        let opts = FdOptions::default();
        let rep = normalization_check(&homogeneous(2), 1.0, Provenance::Oracle, &opts).unwrap();
        assert!(rep.passed, "{rep:?}");
        let rep = normalization_check(&homogeneous(2), 0.5, Provenance::Oracle, &opts).unwrap();
        assert!(!rep.passed);

        let t = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), 0.0, 0.5);
        let fun = |s| laminate::sigma_star(&t, s);
        let rep = normalization_check(&fun, 0.5, Provenance::Laminate, &opts).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn keller_dykhne_trivial_and_laminate() {
        let t = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), 0.4, 0.3);
        let fun = |s| laminate::sigma_star(&t, s);
        let rep = keller_dykhne_check(&fun, cz(1.0, 0.0), Provenance::Laminate, None).unwrap();
        assert_eq!(rep.residual, 0.0);
        let rep = keller_dykhne_check(&fun, cz(5.0, 0.0), Provenance::Laminate, None).unwrap();
        assert!(rep.passed && rep.residual <= 1e-12, "{rep:?}");
        assert!(keller_dykhne_check(&homogeneous(3), cz(5.0, 0.0), Provenance::Oracle, None).is_err());
    }

    #[test]
    fn second_derivative_trivial_fractions() {
        let opts = FdOptions::default();
        for f in [0.0, 1.0] {
            let rep = second_derivative_check(&homogeneous(3), f, Provenance::Oracle, &opts).unwrap();
            assert!(rep.passed);
            assert!(rep.value.unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn second_derivative_of_coated_spheres() {
        // Hashin–Shtrikman: σ* = 1 + 3fδ/(3 + (1-f)δ), δ = σ-1, so σ*''(1) = -2f(1-f)/3.
        let f = 0.3;
        let fun = coated_sphere_fn(f, 3, Core::CorePhase1);
        let rep = second_derivative_check(&fun, f, Provenance::Oracle, &FdOptions::default()).unwrap();
        assert!(rep.residual < 1e-4, "{rep:?}");
    }

    #[test]
    fn phase_interchange_equalities() {
        let hom = homogeneous(3);
        for s in [0.1, 1.0, 3.0, 10.0] {
            let rep = phase_interchange_check(&hom, s, Provenance::Oracle, 1e-12).unwrap();
            assert!((rep.value.unwrap() - 2.0).abs() <= 1e-12);
        }
        let fun = coated_sphere_fn(0.3, 3, Core::CorePhase1);
        let rep = phase_interchange_check(&fun, 1.0, Provenance::Oracle, 1e-12).unwrap();
        assert!((rep.value.unwrap() - 2.0).abs() <= 1e-12);
        // singly coated spheres already attain equality
        for s in [0.1, 0.5, 4.0, 10.0] {
            let rep = phase_interchange_check(&fun, s, Provenance::Oracle, 1e-9).unwrap();
            assert!(rep.passed && (rep.value.unwrap() - 2.0).abs() < 1e-12, "{rep:?}");
        }
    }

    #[test]
    fn coated_sphere_values() {
        let v = coated_sphere_oracle(cz(4.0, 0.0), 0.3, 3, Core::CorePhase1);
        assert!((v.re - (1.0 + 2.7 / 5.1)).abs() < 1e-15);
        assert!((coated_sphere_oracle(cz(4.0, 0.0), 1.0, 3, Core::CorePhase1).re - 4.0).abs() < 1e-15);
        assert!((coated_sphere_oracle(cz(1.0, 0.0), 0.4, 2, Core::CorePhase2).re - 1.0).abs() < 1e-15);
        // phase 2 core at fraction f of phase 1 is the phase-1 core formula with roles swapped
        let a = coated_sphere_oracle(cz(4.0, 0.0), 0.3, 3, Core::CorePhase2);
        let swapped = 4.0 * coated_sphere_oracle(cz(0.25, 0.0), 0.7, 3, Core::CorePhase1);
        assert!((a - swapped).norm() < 1e-14);
    }

    #[test]
    fn csv_forms() {
        let s = ConductivitySample::new(cz(2.0, 0.0), CMatrix::identity(2, 2) * cz(2.0, 0.0), 1.0, Provenance::Oracle)
            .unwrap();
        let csv = sweep_csv(&[s]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "sigma_re,sigma_im,s11_re,s11_im,s12_re,s12_im,s21_re,s21_im,s22_re,s22_im");
        assert_eq!(lines[1], "2,0,2,0,0,0,0,0,2,0");
        let rep = CheckReport::new("x", Provenance::Cell, 0.5, 1.0, true, String::new());
        assert_eq!(rep.csv_row(), "x,cell,0.5,1,true");
    }
}

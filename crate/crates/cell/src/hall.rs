//! Effective Hall coefficient of a 3D cell whose phase 1 has resistivity
//! `ρ₁(h) = ρI + R_H [h]×` and whose phase 2 is a weak isotropic conductor.
//!
//! The effective resistivity is `ρ*(h) = σ*(h)⁻¹`; to first order its
//! antisymmetric part is `R*_H [h]×` for cubic microstructures.

use complab_core::geometry::CellGeometry;
use complab_core::linalg::{self, CMatrix, CVector};
use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{CellError, Result};
use crate::{CellProblem, PhaseTensor, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HallMethod {
    /// Solves at `±h` and differences the antisymmetric part of `ρ*`.
    Direct,
    /// First-order formula from the zero-field fields `E(x)` with `⟨E⟩ = I`.
    Perturbation,
}

impl HallMethod {
    pub fn name(self) -> &'static str {
        match self {
            HallMethod::Direct => "direct",
            HallMethod::Perturbation => "perturbation",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HallOptions {
    /// Conductivity of phase 2.
    pub delta: f64,
    pub solver: SolverOptions,
}

impl Default for HallOptions {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HallReport {
    pub method: HallMethod,
    pub r_star: f64,
    /// Effective conductivity at zero field.
    pub sigma0_star: Option<Matrix3<f64>>,
    pub cubic: bool,
    pub iterations: usize,
}

/// `[h]×`, the matrix of `x ↦ h × x`.
pub fn skew(h: [f64; 3]) -> Matrix3<f64> {
    Matrix3::new(0.0, -h[2], h[1], h[2], 0.0, -h[0], -h[1], h[0], 0.0)
}

/// Axial vector of the antisymmetric part of `m`.
pub fn axial(m: &Matrix3<f64>) -> [f64; 3] {
    let a = (m - m.transpose()) * 0.5;
    [a[(2, 1)], a[(0, 2)], a[(1, 0)]]
}

pub fn hall_resistivity(rho: f64, r_h: f64, h: [f64; 3]) -> Matrix3<f64> {
    Matrix3::identity() * rho + skew(h) * r_h
}

fn complex3(m: &Matrix3<f64>) -> CMatrix {
    linalg::to_complex(&DMatrix::from_iterator(3, 3, m.iter().copied()))
}

fn real3(m: &CMatrix) -> Matrix3<f64> {
    Matrix3::from_iterator(m.iter().map(|z| z.re))
}

fn problem(geom: &CellGeometry, sigma1: &Matrix3<f64>, opts: &HallOptions) -> Result<CellProblem> {
    let p1 = PhaseTensor::new(3, 1, complex3(sigma1))?;
    let p2 = PhaseTensor::scalar(3, Complex64::new(opts.delta, 0.0));
    CellProblem::new(geom, &p1, &p2, opts.solver)
}

fn effective(problem: &CellProblem) -> Result<(Matrix3<f64>, usize, Vec<crate::FieldSolution>)> {
    let sols = problem.basis_solutions()?;
    let iterations = sols.iter().map(|s| s.iterations).sum();
    let cols: Vec<CVector> = sols.iter().map(|s| s.avg_j.clone()).collect();
    Ok((real3(&CMatrix::from_columns(&cols)), iterations, sols))
}

fn invert(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    m.try_inverse()
        .ok_or_else(|| CellError::Invalid("effective conductivity is singular".into()))
}

pub fn hall_coefficient(
    geom: &CellGeometry,
    rho: f64,
    r_h: f64,
    h: [f64; 3],
    method: HallMethod,
    opts: &HallOptions,
) -> Result<HallReport> {
    if geom.dim() != 3 {
        return Err(CellError::Invalid("Hall coefficients need a 3D geometry".into()));
    }
    let hv = Vector3::from(h);
    let hn = hv.norm();
    if !(rho > 0.0) || hn == 0.0 || hn > 1e-3 * rho {
        return Err(CellError::Invalid(format!(
            "need rho > 0 and 0 < |h| <= 1e-3 rho (rho = {rho}, |h| = {hn:e})"
        )));
    }
    let cubic = geom.has_cubic_symmetry();
    if !cubic {
        log::warn!("geometry is not cubic-symmetric; the scalar Hall coefficient is only a projection");
    }
    match method {
        HallMethod::Direct => {
            let mut axials = Vec::with_capacity(2);
            let mut iterations = 0;
            for sign in [1.0, -1.0] {
                let hs = [sign * h[0], sign * h[1], sign * h[2]];
                let sigma1 = invert(&hall_resistivity(rho, r_h, hs))?;
                let (sstar, it, _) = effective(&problem(geom, &sigma1, opts)?)?;
                iterations += it;
                axials.push(Vector3::from(axial(&invert(&sstar)?)));
            }
            let r_star = (axials[0] - axials[1]).dot(&hv) / (2.0 * hn * hn);
            Ok(HallReport {
                method,
                r_star,
                sigma0_star: None,
                cubic,
                iterations,
            })
        }
        HallMethod::Perturbation => {
            let sigma1 = Matrix3::identity() / rho;
            let prob = problem(geom, &sigma1, opts)?;
            let (s0, iterations, sols) = effective(&prob)?;
            // C = ⟨χ cof(E)ᵀ⟩, using Eᵀ[h]×E = [cof(E)ᵀh]×
            let cells = sols[0].cells();
            let mut c = Matrix3::zeros();
            for cell in (0..cells).filter(|&p| prob.indicator()[p] == 1) {
                let pts: Vec<Vec<(f64, CVector)>> = sols.iter().map(|s| prob.point_fields(s, cell)).collect();
                for (q, &(w, _)) in pts[0].iter().enumerate() {
                    let e = Matrix3::from_fn(|i, j| pts[j][q].1[i].re);
                    c += cofactor(&e).transpose() * w;
                }
            }
            c /= cells as f64;
            let dsigma = skew((c * hv).into()) * (-r_h / (rho * rho));
            let s0inv = invert(&s0)?;
            let drho = -(s0inv * dsigma * s0inv);
            let r_star = Vector3::from(axial(&drho)).dot(&hv) / (hn * hn);
            Ok(HallReport {
                method,
                r_star,
                sigma0_star: Some(s0),
                cubic,
                iterations,
            })
        }
    }
}

fn cofactor(m: &Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| {
        let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
        let c: Vec<usize> = (0..3).filter(|&k| k != j).collect();
        let minor = m[(r[0], c[0])] * m[(r[1], c[1])] - m[(r[0], c[1])] * m[(r[1], c[0])];
        if (i + j) % 2 == 0 {
            minor
        } else {
            -minor
        }
    })
}

//! Periodic homogenization on two-phase pixel (2D) and voxel (3D) cells.
//!
//! The cell problem `div(L(x)(E₀ + ∇u)) = 0` is discretized with nodal
//! potentials on voxel corners and voxel-constant tensors, and solved with
//! Krylov iterations preconditioned by the exact inverse of a homogeneous
//! reference medium (diagonal in Fourier space).

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod diagnostics;
mod error;
mod fft;
mod hall;
mod krylov;
mod operator;

use complab_core::geometry::CellGeometry;
use complab_core::linalg::{self, CMatrix, CVector};
use complab_core::tensor::BlockTensor;
use num_complex::Complex64;
use rayon::prelude::*;

pub use diagnostics::{cofactor_diagnostics, CofactorReport, MatrixField, Summary};
pub use error::{CellError, Result};
pub use hall::{axial, hall_coefficient, hall_resistivity, skew, HallMethod, HallOptions, HallReport};
pub use operator::Scheme;

use krylov::System;
use operator::{Operator, Preconditioner};

/// Largest admissible ratio between the largest tensor norm and the
/// smallest eigenvalue of a real symmetric part.
pub const MAX_CONTRAST: f64 = 1e6;

/// A phase tensor acting on `d × n` fields, indexed `d·k + i` for the
/// derivative `∂ᵢ` of potential `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTensor {
    dim: usize,
    n: usize,
    a: CMatrix,
}

impl PhaseTensor {
    pub fn new(dim: usize, n: usize, a: CMatrix) -> Result<Self> {
        if a.nrows() != dim * n || a.ncols() != dim * n {
            return Err(CellError::Invalid(format!(
                "tensor is {}x{}, expected {}x{}",
                a.nrows(),
                a.ncols(),
                dim * n,
                dim * n
            )));
        }
        Ok(Self { dim, n, a })
    }

    /// `s·I` on a single potential.
    pub fn scalar(dim: usize, s: Complex64) -> Self {
        Self {
            dim,
            n: 1,
            a: CMatrix::identity(dim, dim) * s,
        }
    }

    pub fn from_block(l: &BlockTensor) -> Self {
        Self {
            dim: 2,
            n: l.n(),
            a: l.flat().clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.a
    }

    fn is_symmetric(&self) -> bool {
        let scale = self.a.norm().max(f64::MIN_POSITIVE);
        (&self.a - self.a.transpose()).norm() <= 1e-14 * scale
    }

    fn min_real_eigenvalue(&self) -> f64 {
        linalg::min_sym_eigenvalue(&linalg::real_part(&self.a))
    }

    fn norm2(&self) -> f64 {
        self.a.clone().singular_values().max()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual at which iterations stop.
    pub tol: f64,
    /// Defaults to `20·N`.
    pub max_iter: Option<usize>,
    pub scheme: Scheme,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
            scheme: Scheme::default(),
        }
    }
}

/// Solution of one cell problem. Fields and fluxes are voxel averages,
/// stored voxel-major with `d·n` entries per voxel.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub dim: usize,
    pub n: usize,
    pub grid: usize,
    pub e0: CVector,
    /// Periodic potential on voxel corners, `n` entries per node.
    pub potential: Vec<Complex64>,
    pub e: Vec<Complex64>,
    pub j: Vec<Complex64>,
    pub avg_e: CVector,
    pub avg_j: CVector,
    /// `⟨E·LE⟩` with the scheme's quadrature.
    pub energy: Complex64,
    pub residual: f64,
    pub iterations: usize,
}

impl FieldSolution {
    pub fn cells(&self) -> usize {
        self.grid.pow(self.dim as u32)
    }

    pub fn cell_e(&self, cell: usize) -> &[Complex64] {
        let dn = self.dim * self.n;
        &self.e[cell * dn..(cell + 1) * dn]
    }

    pub fn cell_j(&self, cell: usize) -> &[Complex64] {
        let dn = self.dim * self.n;
        &self.j[cell * dn..(cell + 1) * dn]
    }
}

/// A discretized cell problem, reusable across average fields.
pub struct CellProblem {
    op: Operator,
    precond: Preconditioner,
    symmetric: bool,
    opts: SolverOptions,
}

impl CellProblem {
    /// `l1` occupies the voxels where the indicator is 1.
    pub fn new(geom: &CellGeometry, l1: &PhaseTensor, l2: &PhaseTensor, opts: SolverOptions) -> Result<Self> {
        let dim = geom.dim();
        if l1.dim != dim || l2.dim != dim || l1.n != l2.n {
            return Err(CellError::Invalid(format!(
                "tensor shapes (d={}, n={}) and (d={}, n={}) do not fit a {dim}D geometry",
                l1.dim, l1.n, l2.dim, l2.n
            )));
        }
        let f = geom.volume_fraction();
        let present: Vec<&PhaseTensor> = [(l1, f > 0.0), (l2, f < 1.0)]
            .into_iter()
            .filter_map(|(t, here)| here.then_some(t))
            .collect();
        let mut lmin = f64::INFINITY;
        let mut amax: f64 = 0.0;
        for t in &present {
            let m = t.min_real_eigenvalue();
            if m <= 0.0 {
                return Err(CellError::NotPositiveDefinite(m));
            }
            lmin = lmin.min(m);
            amax = amax.max(t.norm2());
        }
        let contrast = amax / lmin;
        if contrast > MAX_CONTRAST * (1.0 + 1e-9) {
            return Err(CellError::ContrastTooHigh(contrast));
        }
        let reference = linalg::sym(&linalg::real_part(&((&l1.a + &l2.a) * Complex64::new(0.5, 0.0))));
        if linalg::min_sym_eigenvalue(&reference) <= 0.0 {
            return Err(CellError::NotPositiveDefinite(linalg::min_sym_eigenvalue(&reference)));
        }
        let n = l1.n;
        let op = Operator::new(
            dim,
            geom.n(),
            n,
            geom.indicator().to_vec(),
            [l2.a.clone(), l1.a.clone()],
            opts.scheme,
        );
        let precond = Preconditioner::new(dim, geom.n(), n, &reference, opts.scheme);
        Ok(Self {
            op,
            precond,
            symmetric: l1.is_symmetric() && l2.is_symmetric(),
            opts,
        })
    }

    pub fn dim(&self) -> usize {
        self.op.dim
    }

    pub fn n(&self) -> usize {
        self.op.n
    }

    pub fn indicator(&self) -> &[u8] {
        self.op.indicator()
    }

    pub fn solve(&self, e0: &CVector) -> Result<FieldSolution> {
        let dn = self.op.dim * self.op.n;
        if e0.len() != dn {
            return Err(CellError::Invalid(format!("average field has {} entries, expected {dn}", e0.len())));
        }
        let b = self.op.rhs(e0);
        let (u, stats) = if krylov::norm(&b) <= 1e-14 * self.op.rhs_scale(e0) {
            (vec![Complex64::new(0.0, 0.0); b.len()], krylov::Stats { iterations: 0, residual: 0.0 })
        } else {
            let apply = |x: &[Complex64], y: &mut [Complex64]| self.op.apply(x, y);
            let precondition = |r: &[Complex64], z: &mut [Complex64]| self.precond.apply(r, z);
            let system = System {
                apply: &apply,
                precondition: &precondition,
                tol: self.opts.tol,
                max_iter: self.opts.max_iter.unwrap_or(20 * self.op.grid),
            };
            if self.symmetric {
                system.cocg(&b)?
            } else {
                system.bicgstab(&b)?
            }
        };
        let (e, j, energy) = self.op.fields(&u, e0);
        let cells = self.op.cells;
        let average = |v: &[Complex64]| {
            CVector::from_iterator(
                dn,
                (0..dn).map(|c| {
                    let col: Vec<Complex64> = (0..cells).map(|p| v[p * dn + c]).collect();
                    krylov::ordered_sum(&col) / cells as f64
                }),
            )
        };
        let avg_e = average(&e);
        let avg_j = average(&j);
        Ok(FieldSolution {
            dim: self.op.dim,
            n: self.op.n,
            grid: self.op.grid,
            e0: e0.clone(),
            potential: u,
            e,
            j,
            avg_e,
            avg_j,
            energy,
            residual: stats.residual,
            iterations: stats.iterations,
        })
    }

    /// Fields of a solution at the quadrature points of one voxel.
    pub fn point_fields(&self, sol: &FieldSolution, cell: usize) -> Vec<(f64, CVector)> {
        self.op.point_fields(&sol.potential, &sol.e0, cell)
    }

    /// Solutions for the unit average fields, in basis order.
    pub fn basis_solutions(&self) -> Result<Vec<FieldSolution>> {
        let dn = self.op.dim * self.op.n;
        (0..dn)
            .into_par_iter()
            .map(|c| {
                let mut e0 = CVector::zeros(dn);
                e0[c] = Complex64::new(1.0, 0.0);
                self.solve(&e0)
            })
            .collect()
    }

    /// `L*` assembled column by column from `⟨J⟩` over the unit loads.
    pub fn effective_tensor(&self) -> Result<CMatrix> {
        let sols = self.basis_solutions()?;
        Ok(CMatrix::from_columns(&sols.iter().map(|s| s.avg_j.clone()).collect::<Vec<_>>()))
    }
}

pub fn solve_cell(
    geom: &CellGeometry,
    l1: &PhaseTensor,
    l2: &PhaseTensor,
    e0: &CVector,
    opts: SolverOptions,
) -> Result<FieldSolution> {
    CellProblem::new(geom, l1, l2, opts)?.solve(e0)
}

pub fn effective_tensor_cell(
    geom: &CellGeometry,
    l1: &PhaseTensor,
    l2: &PhaseTensor,
    opts: SolverOptions,
) -> Result<CMatrix> {
    CellProblem::new(geom, l1, l2, opts)?.effective_tensor()
}

/// Effective block tensor of a 2D pixel geometry.
pub fn effective_block(geom: &CellGeometry, l1: &BlockTensor, l2: &BlockTensor, opts: SolverOptions) -> Result<BlockTensor> {
    let m = effective_tensor_cell(geom, &PhaseTensor::from_block(l1), &PhaseTensor::from_block(l2), opts)?;
    Ok(BlockTensor::from_flat(m)?)
}

/// `σ*(σ)` for conductivity `σ` in phase 1 against 1 in phase 2.
///
/// The cell problem is invariant under multiplying both phases by the same
/// complex number, so the problem is rotated by `e^{-i arg σ / 2}` to give
/// both phases positive real parts and the result is rotated back.
pub fn sigma_star_fn(geom: &CellGeometry, sigma: Complex64, opts: SolverOptions) -> Result<CMatrix> {
    if sigma.im == 0.0 && sigma.re <= 0.0 || !sigma.is_finite() {
        return Err(CellError::BranchCut(sigma));
    }
    let rot = Complex64::from_polar(1.0, -0.5 * sigma.arg());
    let dim = geom.dim();
    let m = effective_tensor_cell(
        geom,
        &PhaseTensor::scalar(dim, sigma * rot),
        &PhaseTensor::scalar(dim, rot),
        opts,
    )?;
    Ok(m / rot)
}

/// `σ ↦ σ*(σ)` as a closure for the analytic checks.
pub fn sigma_star_closure(
    geom: CellGeometry,
    opts: SolverOptions,
) -> impl Fn(Complex64) -> complab_core::Result<CMatrix> + Sync {
    move |s| sigma_star_fn(&geom, s, opts).map_err(Into::into)
}

/// Residual of the reciprocity relation `L* = L*ᵀ`, relative to `|L*|`.
pub fn symmetry_residual(m: &CMatrix) -> f64 {
    (m - m.transpose()).norm() / m.norm().max(f64::MIN_POSITIVE)
}

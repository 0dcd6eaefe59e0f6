//! Pointwise determinant and cofactor-trace statistics of matrix-valued
//! fields `E(x)` with `⟨E⟩ = I`.

use nalgebra::DMatrix;

use crate::error::{CellError, Result};
use crate::FieldSolution;

/// Voxel values of a `d × d` real matrix field, row-major per voxel.
#[derive(Debug, Clone)]
pub struct MatrixField {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl MatrixField {
    /// Column `j` is the field of the scalar solve with average field `e_j`.
    pub fn from_columns(columns: &[FieldSolution]) -> Result<Self> {
        let dim = columns.first().map_or(0, |c| c.dim);
        if columns.len() != dim || columns.iter().any(|c| c.dim != dim || c.n != 1) {
            return Err(CellError::Invalid(format!(
                "need {dim} scalar solutions, one per unit average field"
            )));
        }
        let cells = columns[0].cells();
        let mut imag: f64 = 0.0;
        let mut values = vec![0.0; cells * dim * dim];
        for (jcol, sol) in columns.iter().enumerate() {
            for cell in 0..cells {
                for (i, v) in sol.cell_e(cell).iter().enumerate() {
                    values[cell * dim * dim + i * dim + jcol] = v.re;
                    imag = imag.max(v.im.abs());
                }
            }
        }
        if imag > 0.0 {
            log::warn!("matrix field has imaginary parts up to {imag:e}; using real parts");
        }
        Ok(Self { dim, values })
    }

    /// A block solve with `n = d`; entry `(i, k)` is `∂ᵢ` of potential `k`.
    pub fn from_block(sol: &FieldSolution) -> Result<Self> {
        if sol.n != sol.dim {
            return Err(CellError::Invalid("block solution must have n = d".into()));
        }
        let values = sol.e.iter().map(|v| v.re).collect::<Vec<_>>();
        let d = sol.dim;
        // stored as d·k + i; transpose to row-major (i, k)
        let mut out = vec![0.0; values.len()];
        for cell in 0..sol.cells() {
            for k in 0..d {
                for i in 0..d {
                    out[cell * d * d + i * d + k] = values[cell * d * d + d * k + i];
                }
            }
        }
        Ok(Self { dim: d, values: out })
    }

    pub fn cells(&self) -> usize {
        self.values.len() / (self.dim * self.dim)
    }

    pub fn matrix(&self, cell: usize) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_row_slice(d, d, &self.values[cell * d * d..(cell + 1) * d * d])
    }

    pub fn det(&self) -> Vec<f64> {
        (0..self.cells()).map(|c| self.matrix(c).determinant()).collect()
    }

    /// Trace of the cofactor matrix: the sum of the principal 2×2 minors.
    pub fn tr_cof(&self) -> Vec<f64> {
        (0..self.cells())
            .map(|c| {
                let m = self.matrix(c);
                let d = self.dim;
                let mut t = 0.0;
                for i in 0..d {
                    for j in i + 1..d {
                        t += m[(i, i)] * m[(j, j)] - m[(i, j)] * m[(j, i)];
                    }
                }
                t
            })
            .collect()
    }
}

/// Minimum, maximum and the fraction of negative entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub negative_fraction: f64,
}

impl Summary {
    pub fn of(v: &[f64]) -> Self {
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let neg = v.iter().filter(|&&x| x < 0.0).count();
        Self {
            min,
            max,
            negative_fraction: neg as f64 / v.len().max(1) as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CofactorReport {
    pub dim: usize,
    pub det: Summary,
    /// Only reported in 3D, where it differs from the determinant.
    pub tr_cof: Option<Summary>,
}

pub fn cofactor_diagnostics(field: &MatrixField) -> CofactorReport {
    CofactorReport {
        dim: field.dim,
        det: Summary::of(&field.det()),
        tr_cof: (field.dim == 3).then(|| Summary::of(&field.tr_cof())),
    }
}

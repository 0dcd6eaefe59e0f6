//! Discrete periodic cell operator.
//!
//! Potentials live on voxel corners (one value per potential component and
//! node), phase tensors are constant on voxels, and fields are gradients of
//! the trilinear interpolant evaluated at quadrature points. With the
//! single centre point this is the rotated staggered-grid difference
//! scheme; with 2^d Gauss points it is the conforming Q1 element.

use complab_core::linalg::{CMatrix, CVector};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::fft::GridFft;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Fields at voxel centres from corner differences.
    #[default]
    Rotated,
    /// Full Gauss quadrature of the Q1 element.
    Gauss,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rotated => "rotated",
            Scheme::Gauss => "gauss",
        }
    }
}

struct Point {
    weight: f64,
    /// `dn × (2^d n)` map from local nodal values to the field.
    b: CMatrix,
}

pub(crate) struct Operator {
    pub dim: usize,
    pub n: usize,
    pub grid: usize,
    pub cells: usize,
    nloc: usize,
    ks: usize,
    indicator: Vec<u8>,
    elem_nodes: Vec<u32>,
    node_elems: Vec<u32>,
    /// Element matrices indexed by the indicator value (0: phase 2, 1: phase 1).
    ke: [CMatrix; 2],
    tensors: [CMatrix; 2],
    points: Vec<Point>,
}

fn shifted(idx: usize, bits: usize, sign: i64, dim: usize, grid: usize) -> usize {
    let mut out = 0;
    let mut rest = idx;
    let mut stride = 1;
    for m in 0..dim {
        let x = (rest % grid) as i64;
        rest /= grid;
        let step = ((bits >> m) & 1) as i64 * sign;
        out += (x + step).rem_euclid(grid as i64) as usize * stride;
        stride *= grid;
    }
    out
}

fn quadrature(dim: usize, n: usize, scheme: Scheme) -> Vec<Point> {
    let nloc = 1 << dim;
    let coords: Vec<Vec<f64>> = match scheme {
        Scheme::Rotated => vec![vec![0.5; dim]],
        Scheme::Gauss => {
            let g = 0.5 / 3f64.sqrt();
            (0..nloc)
                .map(|q| (0..dim).map(|m| if (q >> m) & 1 == 1 { 0.5 + g } else { 0.5 - g }).collect())
                .collect()
        }
    };
    let weight = 1.0 / coords.len() as f64;
    coords
        .into_iter()
        .map(|x| {
            let mut b = CMatrix::zeros(dim * n, nloc * n);
            for a in 0..nloc {
                for i in 0..dim {
                    let mut dphi = if (a >> i) & 1 == 1 { 1.0 } else { -1.0 };
                    for (m, &xm) in x.iter().enumerate() {
                        if m != i {
                            dphi *= if (a >> m) & 1 == 1 { xm } else { 1.0 - xm };
                        }
                    }
                    for k in 0..n {
                        b[(dim * k + i, a * n + k)] = Complex64::new(dphi, 0.0);
                    }
                }
            }
            Point { weight, b }
        })
        .collect()
}

impl Operator {
    /// `tensors[1]` is the phase-1 tensor, `tensors[0]` the phase-2 tensor.
    pub fn new(dim: usize, grid: usize, n: usize, indicator: Vec<u8>, tensors: [CMatrix; 2], scheme: Scheme) -> Self {
        let cells = grid.pow(dim as u32);
        let nloc = 1 << dim;
        let points = quadrature(dim, n, scheme);
        let ke = [0, 1].map(|ph| {
            let mut k = CMatrix::zeros(nloc * n, nloc * n);
            for p in &points {
                k += p.b.transpose() * &tensors[ph] * &p.b * Complex64::new(p.weight, 0.0);
            }
            k
        });
        let mut elem_nodes = Vec::with_capacity(cells * nloc);
        let mut node_elems = Vec::with_capacity(cells * nloc);
        for idx in 0..cells {
            for a in 0..nloc {
                elem_nodes.push(shifted(idx, a, 1, dim, grid) as u32);
                node_elems.push(shifted(idx, a, -1, dim, grid) as u32);
            }
        }
        Self {
            dim,
            n,
            grid,
            cells,
            nloc,
            ks: nloc * n,
            indicator,
            elem_nodes,
            node_elems,
            ke,
            tensors,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.cells * self.n
    }

    pub fn tensor(&self, cell: usize) -> &CMatrix {
        &self.tensors[self.indicator[cell] as usize]
    }

    pub fn indicator(&self) -> &[u8] {
        &self.indicator
    }

    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (n, nloc) = (self.n, self.nloc);
        y.par_chunks_mut(n).with_min_len(512).enumerate().for_each(|(p, yp)| {
            yp.fill(ZERO);
            for a in 0..nloc {
                let e = self.node_elems[p * nloc + a] as usize;
                let k = &self.ke[self.indicator[e] as usize];
                for b in 0..nloc {
                    let q = self.elem_nodes[e * nloc + b] as usize;
                    for l in 0..n {
                        let xq = x[q * n + l];
                        for (kk, y) in yp.iter_mut().enumerate() {
                            *y += k[(a * n + kk, b * n + l)] * xq;
                        }
                    }
                }
            }
        });
    }

    /// Right-hand side for the fluctuation when the average field is `e0`.
    pub fn rhs(&self, e0: &CVector) -> Vec<Complex64> {
        let (n, nloc) = (self.n, self.nloc);
        let fe = [0, 1].map(|ph| {
            let mut f = CVector::zeros(self.ks);
            for p in &self.points {
                f += p.b.transpose() * (&self.tensors[ph] * e0) * Complex64::new(p.weight, 0.0);
            }
            f
        });
        let mut out = vec![ZERO; self.len()];
        out.par_chunks_mut(n).with_min_len(512).enumerate().for_each(|(p, bp)| {
            for a in 0..nloc {
                let e = self.node_elems[p * nloc + a] as usize;
                let f = &fe[self.indicator[e] as usize];
                for (k, v) in bp.iter_mut().enumerate() {
                    *v -= f[a * n + k];
                }
            }
        });
        out
    }

    /// Magnitude against which the right-hand side is judged to vanish.
    pub fn rhs_scale(&self, e0: &CVector) -> f64 {
        let a = self.tensors.iter().map(|t| t.norm()).fold(0.0, f64::max);
        a * e0.norm() * (self.len() as f64).sqrt()
    }

    fn local(&self, u: &[Complex64], cell: usize) -> CVector {
        let n = self.n;
        CVector::from_iterator(
            self.ks,
            (0..self.nloc).flat_map(|b| {
                let q = self.elem_nodes[cell * self.nloc + b] as usize;
                (0..n).map(move |l| u[q * n + l])
            }),
        )
    }

    /// Fields at the quadrature points of one voxel, with their weights.
    pub fn point_fields(&self, u: &[Complex64], e0: &CVector, cell: usize) -> Vec<(f64, CVector)> {
        let ue = self.local(u, cell);
        self.points.iter().map(|p| (p.weight, e0 + &p.b * &ue)).collect()
    }

    /// Voxel-averaged fields `E`, fluxes `J`, and the quadrature energy
    /// `⟨E·LE⟩` (bilinear, no conjugation).
    pub fn fields(&self, u: &[Complex64], e0: &CVector) -> (Vec<Complex64>, Vec<Complex64>, Complex64) {
        let dn = self.dim * self.n;
        let mut e = vec![ZERO; self.cells * dn];
        let mut j = vec![ZERO; self.cells * dn];
        let energies: Vec<Complex64> = e
            .par_chunks_mut(dn)
            .zip(j.par_chunks_mut(dn))
            .enumerate()
            .with_min_len(512)
            .map(|(cell, (ec, jc))| {
                let a = self.tensor(cell);
                let mut avg = CVector::zeros(dn);
                let mut energy = ZERO;
                for (w, f) in self.point_fields(u, e0, cell) {
                    energy += (f.transpose() * a * &f)[(0, 0)] * w;
                    avg += f * Complex64::new(w, 0.0);
                }
                ec.copy_from_slice(avg.as_slice());
                jc.copy_from_slice((a * avg).as_slice());
                energy
            })
            .collect();
        let energy = crate::krylov::ordered_sum(&energies) / self.cells as f64;
        (e, j, energy)
    }
}

/// Inverse of the reference-medium operator, applied in Fourier space.
pub(crate) struct Preconditioner {
    n: usize,
    cells: usize,
    fft: GridFft,
    inverse: Vec<Complex64>,
}

impl Preconditioner {
    pub fn new(dim: usize, grid: usize, n: usize, reference: &DMatrix<f64>, scheme: Scheme) -> Self {
        let a0 = complab_core::linalg::to_complex(reference);
        let hom = Operator::new(dim, grid, n, vec![0; grid.pow(dim as u32)], [a0.clone(), a0], scheme);
        let cells = hom.cells;
        let fft = GridFft::new(dim, grid);
        let mut symbol = vec![ZERO; cells * n * n];
        let mut x = vec![ZERO; cells * n];
        let mut y = vec![ZERO; cells * n];
        let mut comp = vec![ZERO; cells];
        for l in 0..n {
            x.fill(ZERO);
            x[l] = Complex64::new(1.0, 0.0);
            hom.apply(&x, &mut y);
            for k in 0..n {
                for (p, c) in comp.iter_mut().enumerate() {
                    *c = y[p * n + k];
                }
                fft.forward(&mut comp);
                for (xi, c) in comp.iter().enumerate() {
                    symbol[xi * n * n + k * n + l] = *c;
                }
            }
        }
        let scale = symbol.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut inverse = vec![ZERO; cells * n * n];
        inverse.par_chunks_mut(n * n).enumerate().for_each(|(xi, out)| {
            if xi == 0 {
                return;
            }
            let s = CMatrix::from_row_slice(n, n, &symbol[xi * n * n..(xi + 1) * n * n]);
            if s.norm() <= 1e-10 * scale {
                return;
            }
            if let Some(inv) = s.try_inverse() {
                for k in 0..n {
                    for l in 0..n {
                        out[k * n + l] = inv[(k, l)];
                    }
                }
            }
        });
        Self { n, cells, fft, inverse }
    }

    pub fn apply(&self, r: &[Complex64], z: &mut [Complex64]) {
        let (n, cells) = (self.n, self.cells);
        let comps: Vec<Vec<Complex64>> = (0..n)
            .map(|k| {
                let mut c: Vec<Complex64> = (0..cells).map(|p| r[p * n + k]).collect();
                self.fft.forward(&mut c);
                c
            })
            .collect();
        let mut out: Vec<Vec<Complex64>> = vec![vec![ZERO; cells]; n];
        for xi in 0..cells {
            let m = &self.inverse[xi * n * n..(xi + 1) * n * n];
            for k in 0..n {
                let mut acc = ZERO;
                for l in 0..n {
                    acc += m[k * n + l] * comps[l][xi];
                }
                out[k][xi] = acc;
            }
        }
        let norm = 1.0 / cells as f64;
        for (k, c) in out.iter_mut().enumerate() {
            self.fft.inverse(c);
            for (p, v) in c.iter().enumerate() {
                z[p * n + k] = v * norm;
            }
        }
    }
}

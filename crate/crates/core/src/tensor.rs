//! Block tensors acting on 2×n matrix fields.
//!
//! A [`BlockTensor`] is a self-adjoint map on the space of real or complex
//! 2×n matrices. It is stored in its flattened 2n×2n form: the entry of a
//! field at row `i` (spatial component) and column `k` (field index) sits
//! at flat index `2k + i`, so block `(k, l)` occupies rows `2k..2k+2` and
//! columns `2l..2l+2`. The flattened view is used for all spectral queries;
//! the block view is used for construction and serialization.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::{self, CMatrix, CVector};

pub type Mat2 = Matrix2<Complex64>;

const SYM_TOL: f64 = 1e-12;
const SCALAR_BLOCK_TOL: f64 = 1e-12;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Rotation by `theta` radians.
pub fn rotation(theta: f64) -> Mat2 {
    let (s, co) = theta.sin_cos();
    Mat2::new(c(co), c(-s), c(s), c(co))
}

/// The 90° rotation `[[0, -1], [1, 0]]`.
pub fn r_perp() -> Mat2 {
    Mat2::new(c(0.0), c(-1.0), c(1.0), c(0.0))
}

/// `I_n ⊗ R`: the same 2×2 map applied to every column of a 2×n field.
fn columnwise(n: usize, r: &Mat2) -> CMatrix {
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        m.view_mut((2 * k, 2 * k), (2, 2)).copy_from(r);
    }
    m
}

/// A 2×n matrix, an element of the field space.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2n {
    data: CMatrix,
}

impl Field2n {
    pub fn zeros(n: usize) -> Self {
        Self {
            data: CMatrix::zeros(2, n),
        }
    }

    pub fn from_matrix(data: CMatrix) -> Result<Self> {
        if data.nrows() != 2 {
            return Err(CoreError::DimensionMismatch {
                expected: 2,
                got: data.nrows(),
            });
        }
        Ok(Self { data })
    }

    pub fn from_real(data: &DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(linalg::to_complex(data))
    }

    /// Builds a field from its two rows.
    pub fn from_rows(row0: &[f64], row1: &[f64]) -> Result<Self> {
        if row0.len() != row1.len() {
            return Err(CoreError::DimensionMismatch {
                expected: row0.len(),
                got: row1.len(),
            });
        }
        let n = row0.len();
        Ok(Self {
            data: CMatrix::from_fn(2, n, |i, k| c(if i == 0 { row0[k] } else { row1[k] })),
        })
    }

    /// The 2×n "identity" with ones on the leading diagonal.
    pub fn identity(n: usize) -> Self {
        Self {
            data: CMatrix::from_fn(2, n, |i, k| if i == k { c(1.0) } else { c(0.0) }),
        }
    }

    /// Unit field with a one at (row, col).
    pub fn unit(n: usize, row: usize, col: usize) -> Self {
        let mut f = Self::zeros(n);
        f.data[(row, col)] = c(1.0);
        f
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    /// Flattened column vector, index `2k + i`.
    pub fn to_flat(&self) -> CVector {
        CVector::from_iterator(2 * self.n(), self.data.iter().copied())
    }

    pub fn from_flat(v: &CVector) -> Self {
        let n = v.len() / 2;
        Self {
            data: CMatrix::from_iterator(2, n, v.iter().copied()),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[(row, col)]
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            data: &self.data * s,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            data: &self.data + &other.data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            data: &self.data - &other.data,
        }
    }

    /// Rank-one field `a ⊗ b` (a is the spatial 2-vector, b has n entries).
    pub fn outer(a: [f64; 2], b: &[f64]) -> Self {
        Self {
            data: CMatrix::from_fn(2, b.len(), |i, k| c(a[i] * b[k])),
        }
    }

    /// Determinant of the 2×2 minor built from columns `p` and `q`.
    pub fn minor(&self, p: usize, q: usize) -> Complex64 {
        self.data[(0, p)] * self.data[(1, q)] - self.data[(1, p)] * self.data[(0, q)]
    }
}

/// `Tr(a bᵀ)`, bilinear (no conjugation) so that it extends to complex fields.
pub fn inner(a: &Field2n, b: &Field2n) -> Result<Complex64> {
    if a.n() != b.n() {
        return Err(CoreError::DimensionMismatch {
            expected: a.n(),
            got: b.n(),
        });
    }
    Ok(a.data.iter().zip(b.data.iter()).map(|(x, y)| x * y).sum())
}

/// Self-adjoint map on 2×n matrices, stored flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTensor {
    n: usize,
    flat: CMatrix,
}

impl BlockTensor {
    /// Wraps a flattened 2n×2n matrix. Block symmetry is checked to 1e-12
    /// relative and then imposed exactly.
    pub fn from_flat(flat: CMatrix) -> Result<Self> {
        if flat.nrows() != flat.ncols() || !flat.nrows().is_multiple_of(2) || flat.nrows() == 0 {
            return Err(CoreError::DimensionMismatch {
                expected: flat.ncols().max(2),
                got: flat.nrows(),
            });
        }
        let scale = linalg::max_abs(&flat).max(f64::MIN_POSITIVE);
        let asym = linalg::max_abs(&(&flat - flat.transpose())) / scale;
        if asym > SYM_TOL {
            return Err(CoreError::NotSymmetric(asym));
        }
        let n = flat.nrows() / 2;
        let flat = (&flat + flat.transpose()) * c(0.5);
        Ok(Self { n, flat })
    }

    pub fn from_real_flat(flat: &DMatrix<f64>) -> Result<Self> {
        Self::from_flat(linalg::to_complex(flat))
    }

    /// Builds a tensor from its n×n grid of blocks (`blocks[k][l]`).
    pub fn from_blocks(blocks: &[Vec<Mat2>]) -> Result<Self> {
        let n = blocks.len();
        let mut flat = CMatrix::zeros(2 * n, 2 * n);
        for (k, row) in blocks.iter().enumerate() {
            if row.len() != n {
                return Err(CoreError::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (l, b) in row.iter().enumerate() {
                flat.view_mut((2 * k, 2 * l), (2, 2)).copy_from(b);
            }
        }
        Self::from_flat(flat)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            flat: CMatrix::identity(2 * n, 2 * n),
        }
    }

    /// n = 1 tensor `s·I`.
    pub fn scalar(s: Complex64) -> Self {
        Self {
            n: 1,
            flat: CMatrix::identity(2, 2) * s,
        }
    }

    /// n = 1 tensor from a single 2×2 conductivity.
    pub fn from_mat2(m: Mat2) -> Result<Self> {
        Self::from_blocks(&[vec![m]])
    }

    /// Block-diagonal tensor with the same 2×2 block repeated n times.
    pub fn repeated(block: &Mat2, n: usize) -> Result<Self> {
        Self::from_flat(columnwise(n, block))
    }

    /// Tensor whose blocks are `s_kl · I`.
    pub fn from_scalar_blocks(s: &DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        let flat = CMatrix::from_fn(2 * n, 2 * n, |r, q| {
            if r % 2 == q % 2 {
                c(s[(r / 2, q / 2)])
            } else {
                c(0.0)
            }
        });
        Self::from_flat(flat)
    }

    /// Block-diagonal assembly of several tensors.
    pub fn block_diag(parts: &[&BlockTensor]) -> Result<Self> {
        let n: usize = parts.iter().map(|p| p.n).sum();
        let mut flat = CMatrix::zeros(2 * n, 2 * n);
        let mut off = 0;
        for p in parts {
            flat.view_mut((off, off), (2 * p.n, 2 * p.n))
                .copy_from(&p.flat);
            off += 2 * p.n;
        }
        Self::from_flat(flat)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn flat(&self) -> &CMatrix {
        &self.flat
    }

    pub fn block(&self, k: usize, l: usize) -> Mat2 {
        self.flat.fixed_view::<2, 2>(2 * k, 2 * l).into_owned()
    }

    pub fn is_real(&self) -> bool {
        self.flat.iter().all(|z| z.im == 0.0)
    }

    /// Real part of the flattened matrix (already symmetric).
    pub fn real_flat(&self) -> DMatrix<f64> {
        linalg::real_part(&self.flat)
    }

    pub fn imag_flat(&self) -> DMatrix<f64> {
        linalg::imag_part(&self.flat)
    }

    /// Smallest eigenvalue of the real symmetric part.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_sym_eigenvalue(&self.real_flat())
    }

    pub fn eigenvalues_real(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.real_flat().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > 0.0
    }

    pub fn ensure_positive_definite(&self) -> Result<()> {
        let m = self.min_eigenvalue();
        if m > 0.0 {
            Ok(())
        } else {
            Err(CoreError::NotPositiveDefinite(m))
        }
    }

    pub fn apply(&self, f: &Field2n) -> Result<Field2n> {
        self.check_n(f.n())?;
        Ok(Field2n::from_flat(&(&self.flat * f.to_flat())))
    }

    /// Quadratic form `F·LF`.
    pub fn quadratic(&self, f: &Field2n) -> Result<Complex64> {
        inner(f, &self.apply(f)?)
    }

    pub fn inverse(&self) -> Result<Self> {
        Self::from_flat(linalg::cinverse(&self.flat, "block tensor inverse")?)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_n(other.n)?;
        Ok(Self {
            n: self.n,
            flat: &self.flat + &other.flat,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_n(other.n)?;
        Ok(Self {
            n: self.n,
            flat: &self.flat - &other.flat,
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            n: self.n,
            flat: &self.flat * s,
        }
    }

    /// Conjugates every block with the same 2×2 rotation: `R B Rᵀ`.
    pub fn conjugate_blocks(&self, r: &Mat2) -> Self {
        let big = columnwise(self.n, r);
        let flat = &big * &self.flat * big.transpose();
        Self {
            n: self.n,
            flat: (&flat + flat.transpose()) * c(0.5),
        }
    }

    pub fn rotate(&self, theta: f64) -> Self {
        if theta == 0.0 {
            return self.clone();
        }
        self.conjugate_blocks(&rotation(theta))
    }

    /// Largest absolute entry of `L - Lᵀ` in block form.
    pub fn symmetry_residual(&self) -> f64 {
        linalg::max_abs(&(&self.flat - self.flat.transpose()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        linalg::max_abs(&(&self.flat - &other.flat))
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n != self.n {
            return Err(CoreError::DimensionMismatch {
                expected: self.n,
                got: n,
            });
        }
        Ok(())
    }
}

/// Conjugates every block by the 90° rotation.
pub fn rotate_perp(l: &BlockTensor) -> BlockTensor {
    l.conjugate_blocks(&r_perp())
}

/// Block tensor extended by a linear term and a constant: the quadratic
/// form `(F, θ)·K(F, θ) = F·LF + 2θ V·F + θ² c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedTensor {
    pub l: BlockTensor,
    pub v: Field2n,
    pub c: Complex64,
}

impl AugmentedTensor {
    pub fn new(l: BlockTensor, v: Field2n, c: Complex64) -> Result<Self> {
        if v.n() != l.n() {
            return Err(CoreError::DimensionMismatch {
                expected: l.n(),
                got: v.n(),
            });
        }
        Ok(Self { l, v, c })
    }

    /// Well `W(F) = (F - F0)·L(F - F0) + k`, written in augmented form.
    pub fn from_well(l: BlockTensor, center: &Field2n, k: f64) -> Result<Self> {
        let lf = l.apply(center)?;
        let c0 = inner(center, &lf)? + c(k);
        Self::new(l, lf.scale(c(-1.0)), c0)
    }

    pub fn n(&self) -> usize {
        self.l.n()
    }

    /// Flattened (2n+1)×(2n+1) matrix with θ as the last coordinate.
    pub fn flat(&self) -> CMatrix {
        let m = 2 * self.n();
        let mut k = CMatrix::zeros(m + 1, m + 1);
        k.view_mut((0, 0), (m, m)).copy_from(self.l.flat());
        let v = self.v.to_flat();
        for i in 0..m {
            k[(i, m)] = v[i];
            k[(m, i)] = v[i];
        }
        k[(m, m)] = self.c;
        k
    }

    pub fn from_flat(k: &CMatrix) -> Result<Self> {
        let size = k.nrows();
        if size < 3 || size % 2 != 1 || k.ncols() != size {
            return Err(CoreError::DimensionMismatch {
                expected: 3,
                got: size,
            });
        }
        let m = size - 1;
        let l = BlockTensor::from_flat(k.view((0, 0), (m, m)).into_owned())?;
        let v = CVector::from_fn(m, |i, _| (k[(i, m)] + k[(m, i)]) * 0.5);
        Self::new(l, Field2n::from_flat(&v), k[(m, m)])
    }

    /// Smallest eigenvalue of the real symmetric part of the flattening.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_sym_eigenvalue(&linalg::real_part(&self.flat()))
    }

    pub fn ensure_positive_definite(&self) -> Result<()> {
        let m = self.min_eigenvalue();
        if m > 0.0 {
            Ok(())
        } else {
            Err(CoreError::NotPositiveDefinite(m))
        }
    }

    pub fn rotate(&self, theta: f64) -> Self {
        if theta == 0.0 {
            return self.clone();
        }
        let r = rotation(theta);
        Self {
            l: self.l.conjugate_blocks(&r),
            v: Field2n {
                data: CMatrix::from_iterator(2, self.n(), (r * self.v.matrix()).iter().copied()),
            },
            c: self.c,
        }
    }
}

/// Evaluates `(F,1)·K(F,1) = F·LF + 2V·F + c`.
pub fn eval_well(k: &AugmentedTensor, f: &Field2n) -> Result<Complex64> {
    let lf = k.l.apply(f)?;
    Ok(inner(f, &lf)? + inner(&k.v, f)? * 2.0 + k.c)
}

/// Result of simultaneously diagonalizing two scalar-block tensors.
#[derive(Debug, Clone)]
pub struct Decoupling {
    /// σ^(k), sorted descending.
    pub eigenvalues: Vec<f64>,
    /// n×n scalar matrix; the block transform is `W ⊗ I`.
    pub w: DMatrix<f64>,
}

impl Decoupling {
    pub fn block_w(&self) -> CMatrix {
        let n = self.w.nrows();
        CMatrix::from_fn(2 * n, 2 * n, |r, q| {
            if r % 2 == q % 2 {
                c(self.w[(r / 2, q / 2)])
            } else {
                c(0.0)
            }
        })
    }
}

/// Extracts `s_kl` from blocks `s_kl·I`, failing when any block deviates.
pub fn scalar_blocks(l: &BlockTensor) -> Result<DMatrix<f64>> {
    if !l.is_real() {
        return Err(CoreError::DegenerateInput(
            "decoupling requires real tensors".into(),
        ));
    }
    let n = l.n();
    let mut s = DMatrix::zeros(n, n);
    for k in 0..n {
        for q in 0..n {
            let b = l.block(k, q).map(|z| z.re);
            let norm = b.norm();
            let dev = b[(0, 1)]
                .abs()
                .max(b[(1, 0)].abs())
                .max((b[(0, 0)] - b[(1, 1)]).abs());
            if norm > 0.0 && dev / norm > SCALAR_BLOCK_TOL {
                return Err(CoreError::NonScalarBlocks {
                    row: k,
                    col: q,
                    deviation: dev / norm,
                });
            }
            s[(k, q)] = 0.5 * (b[(0, 0)] + b[(1, 1)]);
        }
    }
    Ok(s)
}

/// Finds W with `WᵀL2W = I` and `WᵀL1W = diag(σ^(k))⊗I`.
///
/// The eigenproblem is solved on the n×n scalar matrices, not on the
/// flattened tensors, so the `⊗ I` structure is kept exactly.
pub fn decouple(l1: &BlockTensor, l2: &BlockTensor) -> Result<Decoupling> {
    if l1.n() != l2.n() {
        return Err(CoreError::DimensionMismatch {
            expected: l1.n(),
            got: l2.n(),
        });
    }
    let s1 = scalar_blocks(l1)?;
    let s2 = scalar_blocks(l2)?;
    let (_, s2_inv_sqrt) = linalg::sqrt_and_inv_sqrt(&s2)?;
    let m = linalg::sym(&(&s2_inv_sqrt * &s1 * &s2_inv_sqrt));
    let eig = m.symmetric_eigen();
    let n = s1.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let q = DMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    Ok(Decoupling {
        eigenvalues,
        w: s2_inv_sqrt * q,
    })
}

/// `L* = W^{-T} diag(σ*(σ^(k))) W^{-1}` with `W ⊗ I` the block transform.
pub fn reassemble(sigma_stars: &[Mat2], w: &DMatrix<f64>) -> Result<BlockTensor> {
    let n = w.nrows();
    if sigma_stars.len() != n || w.ncols() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: sigma_stars.len(),
        });
    }
    let w_inv = w
        .clone()
        .try_inverse()
        .ok_or(CoreError::Singular("decoupling matrix W"))?;
    let mut diag = CMatrix::zeros(2 * n, 2 * n);
    for (k, s) in sigma_stars.iter().enumerate() {
        diag.view_mut((2 * k, 2 * k), (2, 2)).copy_from(s);
    }
    let big_inv = Decoupling {
        eigenvalues: vec![],
        w: w_inv,
    }
    .block_w();
    BlockTensor::from_flat(big_inv.transpose() * diag * big_inv)
}

// ---------------------------------------------------------------------------
// JSON forms

type Block4 = [f64; 4];

#[derive(Serialize, Deserialize)]
struct BlockTensorJson {
    n: usize,
    blocks: Vec<Vec<Block4>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    imag: Option<Vec<Vec<Block4>>>,
}

fn blocks_of(t: &BlockTensor, part: impl Fn(Complex64) -> f64) -> Vec<Vec<Block4>> {
    (0..t.n)
        .map(|k| {
            (0..t.n)
                .map(|l| {
                    let b = t.block(k, l);
                    [part(b[(0, 0)]), part(b[(0, 1)]), part(b[(1, 0)]), part(b[(1, 1)])]
                })
                .collect()
        })
        .collect()
}

impl From<&BlockTensor> for BlockTensorJson {
    fn from(t: &BlockTensor) -> Self {
        Self {
            n: t.n,
            blocks: blocks_of(t, |z| z.re),
            imag: (!t.is_real()).then(|| blocks_of(t, |z| z.im)),
        }
    }
}

impl TryFrom<BlockTensorJson> for BlockTensor {
    type Error = CoreError;

    fn try_from(j: BlockTensorJson) -> Result<Self> {
        let n = j.n;
        let shape_ok = |b: &Vec<Vec<Block4>>| b.len() == n && b.iter().all(|r| r.len() == n);
        if n == 0 || !shape_ok(&j.blocks) || j.imag.as_ref().is_some_and(|b| !shape_ok(b)) {
            return Err(CoreError::DimensionMismatch {
                expected: n,
                got: j.blocks.len(),
            });
        }
        let blocks: Vec<Vec<Mat2>> = (0..n)
            .map(|k| {
                (0..n)
                    .map(|l| {
                        let re = j.blocks[k][l];
                        let im = j.imag.as_ref().map_or([0.0; 4], |b| b[k][l]);
                        Mat2::new(
                            Complex64::new(re[0], im[0]),
                            Complex64::new(re[1], im[1]),
                            Complex64::new(re[2], im[2]),
                            Complex64::new(re[3], im[3]),
                        )
                    })
                    .collect()
            })
            .collect();
        BlockTensor::from_blocks(&blocks)
    }
}

impl Serialize for BlockTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BlockTensorJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for BlockTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = BlockTensorJson::deserialize(d)?;
        BlockTensor::try_from(j).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct AugmentedJson {
    #[serde(flatten)]
    l: BlockTensorJson,
    #[serde(rename = "V")]
    v: Vec<f64>,
    c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    imag_v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    imag_c: Option<f64>,
}

// V is written row-major: first row of the 2×n matrix, then the second.
fn v_rows(v: &Field2n, part: impl Fn(Complex64) -> f64) -> Vec<f64> {
    (0..2)
        .flat_map(|i| (0..v.n()).map(move |k| (i, k)))
        .map(|(i, k)| part(v.get(i, k)))
        .collect()
}

impl Serialize for AugmentedTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let real = self.v.matrix().iter().all(|z| z.im == 0.0) && self.c.im == 0.0;
        AugmentedJson {
            l: BlockTensorJson::from(&self.l),
            v: v_rows(&self.v, |z| z.re),
            c: self.c.re,
            imag_v: (!real).then(|| v_rows(&self.v, |z| z.im)),
            imag_c: (!real).then_some(self.c.im),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AugmentedTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let j = AugmentedJson::deserialize(d)?;
        let l = BlockTensor::try_from(j.l).map_err(D::Error::custom)?;
        let n = l.n();
        if j.v.len() != 2 * n || j.imag_v.as_ref().is_some_and(|v| v.len() != 2 * n) {
            return Err(D::Error::custom(format!("V must have {} entries", 2 * n)));
        }
        let im = j.imag_v.unwrap_or_else(|| vec![0.0; 2 * n]);
        let v = CMatrix::from_fn(2, n, |i, k| Complex64::new(j.v[i * n + k], im[i * n + k]));
        AugmentedTensor::new(
            l,
            Field2n { data: v },
            Complex64::new(j.c, j.imag_c.unwrap_or(0.0)),
        )
        .map_err(D::Error::custom)
    }
}

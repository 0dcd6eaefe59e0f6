//! Exact effective tensors of simple and hierarchical laminates.
//!
//! Lamination is done in the limit of infinitely separated length scales:
//! each branch is a simple laminate of two homogeneous media, the effective
//! tensors of its subtrees. A simple laminate is solved from its jump
//! conditions. With layer normal ν and phase-A fraction f the fields are
//! `E_A = E₀ + (1-f) ν⊗α`, `E_B = E₀ - f ν⊗α`, and continuity of the
//! normal flux `νᵀ(J_A - J_B) = 0` fixes the n-vector α.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::CellGeometry;
use crate::linalg::{self, CMatrix, CVector};
use crate::tensor::{AugmentedTensor, BlockTensor, Field2n};

const NORMAL_TOL: f64 = 1e-14;

/// Recursive description of a multiple-rank laminate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaminateTree {
    Leaf {
        phase: u8,
        #[serde(default)]
        rotation: f64,
    },
    Branch {
        a: Box<LaminateTree>,
        b: Box<LaminateTree>,
        normal: [f64; 2],
        fraction: f64,
    },
}

impl LaminateTree {
    pub fn leaf(phase: u8) -> Self {
        LaminateTree::Leaf { phase, rotation: 0.0 }
    }

    pub fn rotated_leaf(phase: u8, rotation: f64) -> Self {
        LaminateTree::Leaf { phase, rotation }
    }

    /// Branch with the normal given as an angle from the x axis.
    pub fn branch(a: LaminateTree, b: LaminateTree, angle: f64, fraction: f64) -> Self {
        let (s, c) = angle.sin_cos();
        LaminateTree::Branch {
            a: Box::new(a),
            b: Box::new(b),
            normal: [c, s],
            fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LaminateTree::Leaf { phase, rotation } => {
                if *phase != 1 && *phase != 2 {
                    return Err(CoreError::InvalidLaminate(format!("phase {phase} is not 1 or 2")));
                }
                if !rotation.is_finite() {
                    return Err(CoreError::InvalidLaminate("non-finite rotation".into()));
                }
                Ok(())
            }
            LaminateTree::Branch { a, b, normal, fraction } => {
                let len = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
                if !((len - 1.0).abs() <= NORMAL_TOL) {
                    return Err(CoreError::InvalidLaminate(format!(
                        "normal {normal:?} is not a unit vector"
                    )));
                }
                if !(*fraction > 0.0 && *fraction < 1.0) {
                    return Err(CoreError::InvalidLaminate(format!(
                        "fraction {fraction} is not strictly inside (0, 1)"
                    )));
                }
                a.validate()?;
                b.validate()
            }
        }
    }

    /// Leaves have rank 0.
    pub fn rank(&self) -> usize {
        match self {
            LaminateTree::Leaf { .. } => 0,
            LaminateTree::Branch { a, b, .. } => 1 + a.rank().max(b.rank()),
        }
    }

    pub fn has_rotations(&self) -> bool {
        match self {
            LaminateTree::Leaf { rotation, .. } => *rotation != 0.0,
            LaminateTree::Branch { a, b, .. } => a.has_rotations() || b.has_rotations(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            LaminateTree::Leaf { .. } => 1,
            LaminateTree::Branch { a, b, .. } => a.leaf_count() + b.leaf_count(),
        }
    }
}

/// Volume fraction of phase 1.
pub fn volume_fraction(tree: &LaminateTree) -> f64 {
    match tree {
        LaminateTree::Leaf { phase, .. } => {
            if *phase == 1 {
                1.0
            } else {
                0.0
            }
        }
        LaminateTree::Branch { a, b, fraction, .. } => {
            fraction * volume_fraction(a) + (1.0 - fraction) * volume_fraction(b)
        }
    }
}

/// `N`: maps α ∈ Cⁿ to the flattened field `ν⊗α`; extra trailing rows
/// (the θ coordinate of augmented tensors) are zero.
fn jump_operator(dim: usize, n: usize, normal: [f64; 2]) -> CMatrix {
    let mut m = CMatrix::zeros(dim, n);
    for k in 0..n {
        m[(2 * k, k)] = Complex64::new(normal[0], 0.0);
        m[(2 * k + 1, k)] = Complex64::new(normal[1], 0.0);
    }
    m
}

/// Solves for the jump amplitudes α of all loadings at once:
/// returns `Z` with `α = -Z x₀` where `x₀` is the average field.
fn jump_amplitudes(ka: &CMatrix, kb: &CMatrix, jump: &CMatrix, f: f64) -> Result<CMatrix> {
    let mix = ka * Complex64::new(1.0 - f, 0.0) + kb * Complex64::new(f, 0.0);
    let system = jump.transpose() * mix * jump;
    let rhs = jump.transpose() * (ka - kb);
    linalg::csolve(&system, &rhs, "laminate jump system").map_err(|_| CoreError::SingularJumpSystem)
}

fn laminate_flat(ka: &CMatrix, kb: &CMatrix, normal: [f64; 2], f: f64, n: usize) -> Result<CMatrix> {
    let jump = jump_operator(ka.nrows(), n, normal);
    let z = jump_amplitudes(ka, kb, &jump, f)?;
    let mean = ka * Complex64::new(f, 0.0) + kb * Complex64::new(1.0 - f, 0.0);
    let out = mean - (ka - kb) * &jump * z * Complex64::new(f * (1.0 - f), 0.0);
    Ok((&out + out.transpose()) * Complex64::new(0.5, 0.0))
}

fn check_pair(la: &BlockTensor, lb: &BlockTensor, normal: [f64; 2], f: f64) -> Result<()> {
    if la.n() != lb.n() {
        return Err(CoreError::DimensionMismatch {
            expected: la.n(),
            got: lb.n(),
        });
    }
    let len = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
    if !((len - 1.0).abs() <= NORMAL_TOL) {
        return Err(CoreError::InvalidLaminate(format!("normal {normal:?} is not a unit vector")));
    }
    if !(f > 0.0 && f < 1.0) {
        return Err(CoreError::InvalidLaminate(format!("fraction {f} outside (0, 1)")));
    }
    Ok(())
}

/// Effective tensor of a simple laminate of `la` (fraction `f`) and `lb`.
pub fn laminate_pair(la: &BlockTensor, lb: &BlockTensor, normal: [f64; 2], f: f64) -> Result<BlockTensor> {
    check_pair(la, lb, normal, f)?;
    BlockTensor::from_flat(laminate_flat(la.flat(), lb.flat(), normal, f, la.n())?)
}

/// Augmented counterpart of [`laminate_pair`]: θ is continuous across the
/// layers and the scalar `s` is averaged.
pub fn laminate_pair_augmented(
    ka: &AugmentedTensor,
    kb: &AugmentedTensor,
    normal: [f64; 2],
    f: f64,
) -> Result<AugmentedTensor> {
    check_pair(&ka.l, &kb.l, normal, f)?;
    AugmentedTensor::from_flat(&laminate_flat(&ka.flat(), &kb.flat(), normal, f, ka.n())?)
}

fn leaf_tensor(phase: u8, rotation: f64, l1: &BlockTensor, l2: &BlockTensor) -> BlockTensor {
    let base = if phase == 1 { l1 } else { l2 };
    base.rotate(rotation)
}

fn effective_rec(tree: &LaminateTree, l1: &BlockTensor, l2: &BlockTensor) -> Result<BlockTensor> {
    match tree {
        LaminateTree::Leaf { phase, rotation } => Ok(leaf_tensor(*phase, *rotation, l1, l2)),
        LaminateTree::Branch { a, b, normal, fraction } => {
            let la = effective_rec(a, l1, l2)?;
            let lb = effective_rec(b, l1, l2)?;
            laminate_pair(&la, &lb, *normal, *fraction)
        }
    }
}

/// Effective tensor of a hierarchical laminate with phases `l1`, `l2`.
/// Leaf rotations conjugate every 2×2 block by the same rotation.
pub fn effective_tensor(tree: &LaminateTree, l1: &BlockTensor, l2: &BlockTensor) -> Result<BlockTensor> {
    tree.validate()?;
    if l1.n() != l2.n() {
        return Err(CoreError::DimensionMismatch {
            expected: l1.n(),
            got: l2.n(),
        });
    }
    effective_rec(tree, l1, l2)
}

fn augmented_rec(tree: &LaminateTree, k1: &AugmentedTensor, k2: &AugmentedTensor) -> Result<AugmentedTensor> {
    match tree {
        LaminateTree::Leaf { phase, rotation } => {
            let base = if *phase == 1 { k1 } else { k2 };
            Ok(base.rotate(*rotation))
        }
        LaminateTree::Branch { a, b, normal, fraction } => {
            let ka = augmented_rec(a, k1, k2)?;
            let kb = augmented_rec(b, k1, k2)?;
            laminate_pair_augmented(&ka, &kb, *normal, *fraction)
        }
    }
}

/// `K* = (L*, V*, c*)` of the augmented problem on a laminate.
pub fn augmented_effective(
    tree: &LaminateTree,
    k1: &AugmentedTensor,
    k2: &AugmentedTensor,
) -> Result<AugmentedTensor> {
    tree.validate()?;
    if k1.n() != k2.n() {
        return Err(CoreError::DimensionMismatch {
            expected: k1.n(),
            got: k2.n(),
        });
    }
    augmented_rec(tree, k1, k2)
}

/// Closed-form `V*` and `c*` given `L*` and the volume fraction:
///
/// `V* = V₁ + (L₁ - L*)(L₁ - L₂)⁻¹(V₂ - V₁)`,
/// `c* = f c₁ + (1-f) c₂ + [f V₁ + (1-f) V₂ - V*]·(L₁ - L₂)⁻¹(V₂ - V₁)`.
#[allow(clippy::too_many_arguments)]
pub fn vstar_cstar_from_lstar(
    l1: &BlockTensor,
    l2: &BlockTensor,
    v1: &Field2n,
    v2: &Field2n,
    c1: Complex64,
    c2: Complex64,
    lstar: &BlockTensor,
    f: f64,
) -> Result<(Field2n, Complex64)> {
    let contrast = l1.sub(l2)?;
    let scale = linalg::max_abs(l1.flat()).max(linalg::max_abs(l2.flat()));
    let rc = linalg::real_part(contrast.flat());
    let svals = rc.singular_values();
    let smin = svals.iter().copied().fold(f64::INFINITY, f64::min);
    if contrast.is_real() && smin <= 1e-12 * scale {
        return Err(CoreError::SingularContrast);
    }
    let dv = v2.sub(v1).to_flat();
    let e0 = linalg::csolve(
        contrast.flat(),
        &CMatrix::from_column_slice(dv.len(), 1, dv.as_slice()),
        "L1 - L2",
    )
    .map_err(|_| CoreError::SingularContrast)?;
    let e0 = CVector::from_column_slice(e0.as_slice());
    let vstar = v1.to_flat() + (l1.flat() - lstar.flat()) * &e0;
    let fc = Complex64::new(f, 0.0);
    let gc = Complex64::new(1.0 - f, 0.0);
    let mean_v = v1.to_flat() * fc + v2.to_flat() * gc;
    let cstar = c1 * fc + c2 * gc + (mean_v - &vstar).dot(&e0);
    Ok((Field2n::from_flat(&vstar), cstar))
}

/// Constant fields in one leaf of a laminate.
#[derive(Debug, Clone)]
pub struct LeafField {
    pub phase: u8,
    pub weight: f64,
    pub e: Field2n,
    pub j: Field2n,
}

impl LeafField {
    /// Smallest real part over the 2×2 column minors of E (the determinant when n = 2).
    pub fn min_minor(&self) -> Option<f64> {
        let n = self.e.n();
        let mut out: Option<f64> = None;
        for p in 0..n {
            for q in p + 1..n {
                let d = self.e.minor(p, q).re;
                out = Some(out.map_or(d, |m: f64| m.min(d)));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct LeafFieldReport {
    pub leaves: Vec<LeafField>,
    pub avg_e: Field2n,
    pub avg_j: Field2n,
    /// Minimum over leaves of the smallest column minor of E (det E for n = 2).
    pub min_det: Option<f64>,
}

fn leaf_fields_rec(
    tree: &LaminateTree,
    l1: &BlockTensor,
    l2: &BlockTensor,
    e: &Field2n,
    weight: f64,
    out: &mut Vec<LeafField>,
) -> Result<()> {
    match tree {
        LaminateTree::Leaf { phase, rotation } => {
            let l = leaf_tensor(*phase, *rotation, l1, l2);
            out.push(LeafField {
                phase: *phase,
                weight,
                e: e.clone(),
                j: l.apply(e)?,
            });
            Ok(())
        }
        LaminateTree::Branch { a, b, normal, fraction } => {
            let la = effective_rec(a, l1, l2)?;
            let lb = effective_rec(b, l1, l2)?;
            let n = e.n();
            let jump = jump_operator(2 * n, n, *normal);
            let z = jump_amplitudes(la.flat(), lb.flat(), &jump, *fraction)?;
            let x0 = e.to_flat();
            let alpha = -(z * &x0);
            let delta = &jump * alpha;
            let ea = Field2n::from_flat(&(&x0 + &delta * Complex64::new(1.0 - fraction, 0.0)));
            let eb = Field2n::from_flat(&(&x0 - &delta * Complex64::new(*fraction, 0.0)));
            leaf_fields_rec(a, l1, l2, &ea, weight * fraction, out)?;
            leaf_fields_rec(b, l1, l2, &eb, weight * (1.0 - fraction), out)
        }
    }
}

/// Per-leaf constant fields for a prescribed average field `e0`.
pub fn leaf_fields(tree: &LaminateTree, l1: &BlockTensor, l2: &BlockTensor, e0: &Field2n) -> Result<LeafFieldReport> {
    tree.validate()?;
    if l1.n() != e0.n() || l2.n() != e0.n() {
        return Err(CoreError::DimensionMismatch {
            expected: l1.n(),
            got: e0.n(),
        });
    }
    let mut leaves = Vec::with_capacity(tree.leaf_count());
    leaf_fields_rec(tree, l1, l2, e0, 1.0, &mut leaves)?;
    let n = e0.n();
    let mut avg_e = Field2n::zeros(n);
    let mut avg_j = Field2n::zeros(n);
    for leaf in &leaves {
        let w = Complex64::new(leaf.weight, 0.0);
        avg_e = avg_e.add(&leaf.e.scale(w));
        avg_j = avg_j.add(&leaf.j.scale(w));
    }
    let min_det = leaves
        .iter()
        .filter_map(LeafField::min_minor)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
    Ok(LeafFieldReport {
        leaves,
        avg_e,
        avg_j,
        min_det,
    })
}

/// n = 1 conductivity function `σ ↦ σ*(σ)` of a laminate with phases σ·I and I.
pub fn sigma_star(tree: &LaminateTree, sigma: Complex64) -> Result<CMatrix> {
    let l1 = BlockTensor::scalar(sigma);
    let l2 = BlockTensor::identity(1);
    Ok(effective_tensor(tree, &l1, &l2)?.flat().clone())
}

/// Snaps a unit normal to a lattice direction (p, q) with |p|, |q| ≤ 8.
fn lattice_direction(normal: [f64; 2]) -> Option<(i64, i64)> {
    let mut best = None;
    let mut best_err = f64::INFINITY;
    for p in -8i64..=8 {
        for q in -8i64..=8 {
            if p == 0 && q == 0 {
                continue;
            }
            let len = ((p * p + q * q) as f64).sqrt();
            let err = (normal[0] - p as f64 / len).abs() + (normal[1] - q as f64 / len).abs();
            if err < best_err {
                best_err = err;
                best = Some((p, q));
            }
        }
    }
    (best_err < 1e-9).then_some(best).flatten()
}

struct RasterNode<'a> {
    dir: (i64, i64),
    fraction: f64,
    a: &'a LaminateTree,
    b: &'a LaminateTree,
}

fn raster_check(tree: &LaminateTree, depth: u32, n: usize, ratio: u32) -> Result<()> {
    if let LaminateTree::Branch { a, b, normal, fraction } = tree {
        let (p, q) = lattice_direction(*normal).ok_or_else(|| {
            CoreError::InvalidLaminate(format!("normal {normal:?} is not a lattice direction"))
        })?;
        let periods = (ratio as f64).powi(depth as i32);
        let period_px = n as f64 / (periods * ((p * p + q * q) as f64).sqrt());
        let thinnest = period_px * fraction.min(1.0 - fraction);
        if thinnest < 2.0 {
            return Err(CoreError::ResolutionTooCoarse(format!(
                "layer at depth {depth} is {thinnest:.2} pixels wide"
            )));
        }
        raster_check(a, depth + 1, n, ratio)?;
        raster_check(b, depth + 1, n, ratio)?;
    }
    Ok(())
}

fn raster_phase(tree: &LaminateTree, x: f64, y: f64, depth: u32, ratio: u64) -> u8 {
    match tree {
        LaminateTree::Leaf { phase, .. } => *phase,
        LaminateTree::Branch { a, b, normal, fraction } => {
            // checked in raster_check
            let (p, q) = lattice_direction(*normal).unwrap_or((1, 0));
            let node = RasterNode {
                dir: (p, q),
                fraction: *fraction,
                a,
                b,
            };
            let periods = ratio.pow(depth) as f64;
            let s = periods * (node.dir.0 as f64 * x + node.dir.1 as f64 * y);
            let t = s - s.floor();
            let child = if t < node.fraction { node.a } else { node.b };
            raster_phase(child, x, y, depth + 1, ratio)
        }
    }
}

/// Pixel approximation of a laminate on an N×N periodic grid, with layer
/// periods shrinking by `ratio` at each level of the tree.
pub fn rasterize(tree: &LaminateTree, n: usize, ratio: u32) -> Result<CellGeometry> {
    tree.validate()?;
    if !n.is_power_of_two() || n < 2 {
        return Err(CoreError::InvalidGeometry(format!("grid size {n} is not a power of two")));
    }
    if ratio < 2 {
        return Err(CoreError::InvalidGeometry(format!("scale ratio {ratio} < 2")));
    }
    if tree.has_rotations() {
        return Err(CoreError::InvalidLaminate(
            "rotated leaves cannot be represented by a two-phase indicator".into(),
        ));
    }
    raster_check(tree, 0, n, ratio)?;
    let mut indicator = vec![0u8; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let x = (ix as f64 + 0.5) / n as f64;
            let y = (iy as f64 + 0.5) / n as f64;
            indicator[iy * n + ix] = u8::from(raster_phase(tree, x, y, 0, ratio as u64) == 1);
        }
    }
    let geom = CellGeometry::new(2, n, indicator)?;
    let target = volume_fraction(tree);
    if (geom.volume_fraction() - target).abs() > 2.0 / n as f64 {
        return Err(CoreError::ResolutionTooCoarse(format!(
            "rasterized volume fraction {} differs from {target} by more than 2/N",
            geom.volume_fraction()
        )));
    }
    Ok(geom)
}

/// Real-valued convenience: the 2×2 effective conductivity of an n = 1 laminate.
pub fn sigma_star_real(tree: &LaminateTree, sigma: f64) -> Result<DMatrix<f64>> {
    Ok(linalg::real_part(&sigma_star(tree, Complex64::new(sigma, 0.0))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{rotate_perp, Mat2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    pub(crate) fn random_tree(rng: &mut ChaCha8Rng, max_rank: usize, rotations: bool) -> LaminateTree {
        if max_rank == 0 || rng.gen_bool(0.2) {
            let phase = if rng.gen_bool(0.5) { 1 } else { 2 };
            let rotation = if rotations { rng.gen_range(0.0..std::f64::consts::PI) } else { 0.0 };
            return LaminateTree::Leaf { phase, rotation };
        }
        let a = random_tree(rng, max_rank - 1, rotations);
        let b = random_tree(rng, max_rank - 1, rotations);
        LaminateTree::branch(a, b, rng.gen_range(0.0..std::f64::consts::PI), rng.gen_range(0.05..0.95))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> BlockTensor {
        let a = DMatrix::from_fn(2 * n, 2 * n, |_, _| rng.gen_range(-1.0..1.0));
        let m = &a * a.transpose() + DMatrix::identity(2 * n, 2 * n) * 0.5;
        BlockTensor::from_real_flat(&m).unwrap()
    }

    #[test]
    fn identical_phases_give_same_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let l = random_spd(&mut rng, 2);
        let out = laminate_pair(&l, &l, [0.6, 0.8], 0.37).unwrap();
        assert!(out.max_abs_diff(&l) < 1e-13);
    }

    #[test]
    fn scalar_stripes_give_harmonic_and_arithmetic_means() {
        let out = laminate_pair(&BlockTensor::scalar(c(4.0)), &BlockTensor::identity(1), [1.0, 0.0], 0.5).unwrap();
        let b = out.block(0, 0);
        assert!((b[(0, 0)].re - 1.6).abs() < 1e-14);
        assert!((b[(1, 1)].re - 2.5).abs() < 1e-14);
        assert!(b[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn vanishing_fraction_approaches_phase_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let la = random_spd(&mut rng, 2);
        let lb = random_spd(&mut rng, 2);
        let mut prev = f64::INFINITY;
        for f in [1e-2, 1e-3, 1e-4] {
            let d = laminate_pair(&la, &lb, [0.0, 1.0], f).unwrap().max_abs_diff(&lb);
            assert!(d < prev && d < 50.0 * f);
            prev = d;
        }
    }

    #[test]
    fn harmonic_arithmetic_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 1..4 {
            for _ in 0..20 {
                let la = random_spd(&mut rng, n);
                let lb = random_spd(&mut rng, n);
                let f = rng.gen_range(0.05..0.95);
                let th: f64 = rng.gen_range(0.0..std::f64::consts::PI);
                let out = laminate_pair(&la, &lb, [th.cos(), th.sin()], f).unwrap();
                let ar = la.real_flat() * f + lb.real_flat() * (1.0 - f);
                let hm = (la.real_flat().try_inverse().unwrap() * f
                    + lb.real_flat().try_inverse().unwrap() * (1.0 - f))
                    .try_inverse()
                    .unwrap();
                assert!(linalg::min_sym_eigenvalue(&(&ar - out.real_flat())) > -1e-10);
                assert!(linalg::min_sym_eigenvalue(&(out.real_flat() - &hm)) > -1e-10);
            }
        }
    }

    #[test]
    fn volume_fractions() {
        assert_eq!(volume_fraction(&LaminateTree::leaf(1)), 1.0);
        let t = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), 0.0, 0.3);
        assert_eq!(volume_fraction(&t), 0.3);
        let inner = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), 0.0, 0.5);
        let t = LaminateTree::branch(inner, LaminateTree::leaf(2), 1.0, 0.4);
        assert!((volume_fraction(&t) - 0.2).abs() < 1e-16);
    }

    #[test]
    fn rank_two_orthogonal_laminate_composes_means() {
        // x-layers of (4, 1) at 0.5, then y-layers of that with phase 2 at 0.5
        let inner = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), 0.0, 0.5);
        let t = LaminateTree::Branch {
            a: Box::new(inner),
            b: Box::new(LaminateTree::leaf(2)),
            normal: [0.0, 1.0],
            fraction: 0.5,
        };
        let s = sigma_star_real(&t, 4.0).unwrap();
        // inner: diag(1.6, 2.5); outer along y (normal y): xx arithmetic, yy harmonic
        let xx = 0.5 * 1.6 + 0.5 * 1.0;
        let yy = 1.0 / (0.5 / 2.5 + 0.5 / 1.0);
        assert!((s[(0, 0)] - xx).abs() < 1e-14);
        assert!((s[(1, 1)] - yy).abs() < 1e-14);
    }

    #[test]
    fn leaf_is_phase_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let l1 = random_spd(&mut rng, 2);
        let l2 = random_spd(&mut rng, 2);
        assert_eq!(effective_tensor(&LaminateTree::leaf(1), &l1, &l2).unwrap(), l1);
    }

    #[test]
    fn keller_dykhne_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rp = rotate_perp(&BlockTensor::identity(1));
        assert_eq!(rp, BlockTensor::identity(1));
        for _ in 0..30 {
            let t = random_tree(&mut rng, 4, false);
            for s in [c(2.0), c(5.0), Complex64::new(3.0, 4.0)] {
                let direct = BlockTensor::from_flat(sigma_star(&t, 1.0 / s).unwrap()).unwrap();
                let dual = rotate_perp(&BlockTensor::from_flat(sigma_star(&t, s).unwrap()).unwrap().inverse().unwrap());
                let res = linalg::frobenius(&(direct.flat() - dual.flat())) / linalg::frobenius(direct.flat());
                assert!(res < 1e-12, "residual {res}");
            }
        }
    }

    #[test]
    fn herglotz_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let t = random_tree(&mut rng, 4, true);
            let s = Complex64::new(rng.gen_range(-5.0..5.0), rng.gen_range(0.01..5.0));
            let st = sigma_star(&t, s).unwrap();
            let im = linalg::imag_part(&st);
            assert!(linalg::min_sym_eigenvalue(&im) >= -1e-12);
        }
    }

    #[test]
    fn augmented_equal_phases_and_theta_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let l = random_spd(&mut rng, 2);
        let v = Field2n::from_real(&DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0))).unwrap();
        let k = AugmentedTensor::new(l.clone(), v, c(5.0)).unwrap();
        let t = random_tree(&mut rng, 3, false);
        let out = augmented_effective(&t, &k, &k).unwrap();
        assert!(linalg::max_abs(&(out.flat() - k.flat())) < 1e-12);

        let l2 = random_spd(&mut rng, 2);
        let k2 = AugmentedTensor::new(l2.clone(), Field2n::zeros(2), c(4.0)).unwrap();
        let ks = augmented_effective(&t, &k, &k2).unwrap();
        let ls = effective_tensor(&t, &l, &l2).unwrap();
        assert!(ks.l.max_abs_diff(&ls) < 1e-13);
    }

    #[test]
    fn closed_form_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let l1 = random_spd(&mut rng, 2);
        let l2 = random_spd(&mut rng, 2);
        let z = Field2n::zeros(2);
        let ls = random_spd(&mut rng, 2);
        let (v, cs) = vstar_cstar_from_lstar(&l1, &l2, &z, &z, c(2.0), c(3.0), &ls, 0.25).unwrap();
        assert!(v.matrix().iter().all(|x| x.norm() == 0.0));
        assert!((cs - c(0.25 * 2.0 + 0.75 * 3.0)).norm() < 1e-15);

        let v1 = Field2n::from_rows(&[1.0, 2.0], &[0.5, -1.0]).unwrap();
        let v2 = Field2n::from_rows(&[0.0, 1.0], &[2.0, 1.0]).unwrap();
        let (v, cs) = vstar_cstar_from_lstar(&l1, &l2, &v1, &v2, c(2.0), c(3.0), &l1, 1.0).unwrap();
        assert!(v.sub(&v1).matrix().iter().all(|x| x.norm() < 1e-14));
        assert!((cs - c(2.0)).norm() < 1e-12);

        assert!(matches!(
            vstar_cstar_from_lstar(&l1, &l1, &v1, &v2, c(2.0), c(3.0), &l1, 0.5),
            Err(CoreError::SingularContrast)
        ));
    }

    #[test]
    fn closed_form_matches_augmented_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for n in 1..4 {
            for _ in 0..10 {
                let t = random_tree(&mut rng, 3, false);
                let mk = |rng: &mut ChaCha8Rng| {
                    let a = DMatrix::from_fn(2 * n + 1, 2 * n + 1, |_, _| rng.gen_range(-1.0..1.0));
                    let m = &a * a.transpose() + DMatrix::identity(2 * n + 1, 2 * n + 1) * 0.5;
                    AugmentedTensor::from_flat(&linalg::to_complex(&m)).unwrap()
                };
                let k1 = mk(&mut rng);
                let k2 = mk(&mut rng);
                let ks = augmented_effective(&t, &k1, &k2).unwrap();
                let f = volume_fraction(&t);
                let (v, cs) = vstar_cstar_from_lstar(&k1.l, &k2.l, &k1.v, &k2.v, k1.c, k2.c, &ks.l, f).unwrap();
                let dv = v.sub(&ks.v).matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(dv < 1e-10, "V* mismatch {dv}");
                assert!((cs - ks.c).norm() < 1e-10, "c* mismatch {}", (cs - ks.c).norm());
            }
        }
    }

    #[test]
    fn leaf_fields_homogeneous_and_conservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let l = random_spd(&mut rng, 2);
        let e0 = Field2n::identity(2);
        let t = random_tree(&mut rng, 3, false);
        let rep = leaf_fields(&t, &l, &l, &e0).unwrap();
        for leaf in &rep.leaves {
            assert!(leaf.e.sub(&e0).matrix().iter().all(|z| z.norm() < 1e-13));
        }

        let l2 = random_spd(&mut rng, 2);
        for _ in 0..20 {
            let t = random_tree(&mut rng, 4, true);
            let rep = leaf_fields(&t, &l, &l2, &e0).unwrap();
            let de = rep.avg_e.sub(&e0).matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(de < 1e-12);
            let ls = effective_tensor(&t, &l, &l2).unwrap();
            let dj = rep.avg_j.sub(&ls.apply(&e0).unwrap()).matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(dj < 1e-10);
        }
    }

    #[test]
    fn det_e_positive_for_lifted_conductivities() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..50 {
            let mut phase = || {
                let a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
                let m = &a * a.transpose() + DMatrix::identity(2, 2) * 0.1;
                Mat2::from_fn(|i, j| c(m[(i, j)]))
            };
            let l1 = BlockTensor::repeated(&phase(), 2).unwrap();
            let l2 = BlockTensor::repeated(&phase(), 2).unwrap();
            let t = random_tree(&mut rng, 4, true);
            let rep = leaf_fields(&t, &l1, &l2, &Field2n::identity(2)).unwrap();
            assert!(rep.min_det.unwrap() > 0.0);
        }
    }

    #[test]
    fn invalid_trees_are_rejected() {
        let bad = LaminateTree::Branch {
            a: Box::new(LaminateTree::leaf(1)),
            b: Box::new(LaminateTree::leaf(2)),
            normal: [1.0, 0.1],
            fraction: 0.5,
        };
        assert!(bad.validate().is_err());
        let bad = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), 0.0, 1.0);
        assert!(bad.validate().is_err());
        assert!(LaminateTree::leaf(3).validate().is_err());
    }

    #[test]
    fn tree_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = random_tree(&mut rng, 4, true);
        let text = serde_json::to_string(&t).unwrap();
        let back: LaminateTree = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
        let parsed: LaminateTree = serde_json::from_str(
            r#"{"branch":{"a":{"leaf":{"phase":1}},"b":{"leaf":{"phase":2,"rotation":0.5}},"normal":[1,0],"fraction":0.25}}"#,
        )
        .unwrap();
        assert_eq!(parsed.rank(), 1);
        assert_eq!(volume_fraction(&parsed), 0.25);
    }

    #[test]
    fn rasterize_stripes_and_leaf() {
        let g = rasterize(&LaminateTree::leaf(1), 16, 2).unwrap();
        assert!(g.indicator().iter().all(|&v| v == 1));
        let t = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), 0.0, 0.5);
        let g = rasterize(&t, 64, 2).unwrap();
        for iy in 0..64 {
            for ix in 0..64 {
                assert_eq!(g.indicator()[iy * 64 + ix], u8::from(ix < 32));
            }
        }
    }

    #[test]
    fn rasterize_errors() {
        let inner = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), std::f64::consts::FRAC_PI_2, 0.5);
        let t = LaminateTree::branch(inner, LaminateTree::leaf(2), 0.0, 0.5);
        assert!(rasterize(&t, 256, 8).is_ok());
        assert!(matches!(rasterize(&t, 16, 8), Err(CoreError::ResolutionTooCoarse(_))));
        let odd = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), 0.3, 0.5);
        assert!(rasterize(&odd, 64, 2).is_err());
        let rot = LaminateTree::branch(LaminateTree::rotated_leaf(1, 0.2), LaminateTree::leaf(2), 0.0, 0.5);
        assert!(rasterize(&rot, 64, 2).is_err());
    }
}

//! Two-well energies `W(F) = min{W₁(F), W₂(F)}` on 2×m matrices and
//! computable bounds on their quasiconvexification.
//!
//! * Lower bounds come from the translation method: for a null Lagrangian
//!   `T` with `W_j - T` convex, `QW(F) ≥ T(F) + conv(min_j(W_j - T))(F)`.
//!   The convex envelope of the minimum of two convex quadratics is an
//!   infimal convolution that reduces to a one-dimensional convex problem
//!   in the splitting weight.
//! * Upper bounds come from explicit hierarchical laminates: a tree of
//!   rank-one splittings whose leaves sit in one of the wells.
//!
//! A positive difference between the two is a *bound gap* for these two
//! families only. It says nothing definite about rank-one versus
//! quasiconvexity.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg;
use crate::tensor::{self, rotate_perp, AugmentedTensor, BlockTensor, Field2n};

const RIDGE: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const GOLDEN_TOL: f64 = 1e-12;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Stated whenever bounds are reported.
pub const CAVEAT: &str = "Gaps are gaps between the minor-translation lower bound and the laminate upper bound; \
they are not counterexamples. Equal bounds do not certify G = G^L: equality of the infima is sufficient, but not necessary.";

/// The data `(m, K₁, K₂)` of a two-well energy `W_j(F) = (F, 1)·K_j(F, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoWellSpec {
    pub m: usize,
    #[serde(rename = "K1")]
    pub k1: AugmentedTensor,
    #[serde(rename = "K2")]
    pub k2: AugmentedTensor,
}

/// Real quadratic `xᵀAx + 2bᵀx + c` on flattened fields.
#[derive(Debug, Clone)]
struct Quadratic {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl Quadratic {
    fn eval(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.a * x)[(0, 0)] + 2.0 * self.b.dot(x) + self.c
    }
}

fn real_flat(f: &Field2n) -> DVector<f64> {
    DVector::from_iterator(2 * f.n(), f.matrix().iter().map(|z| z.re))
}

fn is_real(k: &AugmentedTensor) -> bool {
    k.flat().iter().all(|z| z.im == 0.0)
}

impl TwoWellSpec {
    /// Both wells must be real with positive-semidefinite quadratic parts.
    pub fn new(k1: AugmentedTensor, k2: AugmentedTensor) -> Result<Self> {
        if k1.n() != k2.n() {
            return Err(CoreError::DimensionMismatch {
                expected: k1.n(),
                got: k2.n(),
            });
        }
        for k in [&k1, &k2] {
            if !is_real(k) {
                return Err(CoreError::Evaluation("two-well specs must be real".into()));
            }
            let lmin = k.l.min_eigenvalue();
            let scale = linalg::max_abs(k.l.flat()).max(1.0);
            if lmin < -PSD_TOL * scale {
                return Err(CoreError::NotPositiveDefinite(lmin));
            }
        }
        Ok(Self { m: k1.n(), k1, k2 })
    }

    /// Wells `W_j(F) = (F - F_j)·L_j(F - F_j) + k_j`.
    pub fn from_wells(l1: BlockTensor, f1: &Field2n, k1: f64, l2: BlockTensor, f2: &Field2n, k2: f64) -> Result<Self> {
        Self::new(AugmentedTensor::from_well(l1, f1, k1)?, AugmentedTensor::from_well(l2, f2, k2)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m != self.k1.n() {
            return Err(CoreError::DimensionMismatch {
                expected: self.m,
                got: self.k1.n(),
            });
        }
        Self::new(self.k1.clone(), self.k2.clone()).map(|_| ())
    }

    /// The quadratic forms of both wells, with a small ridge added to a
    /// singular `L_j`. The flags report where the ridge was used.
    fn quadratics(&self) -> ([Quadratic; 2], [bool; 2]) {
        let mut ridged = [false; 2];
        let q = [&self.k1, &self.k2].map(|k| Quadratic {
            a: k.l.real_flat(),
            b: real_flat(&k.v),
            c: k.c.re,
        });
        let q = [0, 1].map(|j| {
            let mut qj = q[j].clone();
            let scale = linalg::max_abs(&linalg::to_complex(&qj.a)).max(1.0);
            if linalg::min_sym_eigenvalue(&qj.a) <= 1e-14 * scale {
                ridged[j] = true;
                let d = qj.a.nrows();
                qj.a += DMatrix::identity(d, d) * RIDGE;
            }
            qj
        });
        (q, ridged)
    }

    fn check_field(&self, f: &Field2n) -> Result<()> {
        if f.n() != self.m {
            return Err(CoreError::DimensionMismatch {
                expected: self.m,
                got: f.n(),
            });
        }
        Ok(())
    }

    /// `W(F) = min{W₁(F), W₂(F)}`.
    pub fn eval_w(&self, f: &Field2n) -> Result<f64> {
        self.check_field(f)?;
        let w1 = tensor::eval_well(&self.k1, f)?.re;
        let w2 = tensor::eval_well(&self.k2, f)?.re;
        Ok(w1.min(w2))
    }

    /// Adds the same constant to both wells.
    pub fn shift_constant(&self, d: f64) -> Self {
        let mut out = self.clone();
        out.k1.c += d;
        out.k2.c += d;
        out
    }

    /// The spec `W'(F) = W(F - G)`: both wells moved by `G`.
    pub fn translate(&self, g: &Field2n) -> Result<Self> {
        self.check_field(g)?;
        let mv = |k: &AugmentedTensor| -> Result<AugmentedTensor> {
            let lg = k.l.apply(g)?;
            let v = k.v.sub(&lg);
            let c = k.c - 2.0 * tensor::inner(&k.v, g)? + tensor::inner(g, &lg)?;
            AugmentedTensor::new(k.l.clone(), v, c)
        };
        Self::new(mv(&self.k1)?, mv(&self.k2)?)
    }
}

// ---------------------------------------------------------------------------
// Translations

/// `T(F) = Σ_{p<q} c_pq det[F_p F_q]`, a quadratic null Lagrangian on
/// 2×m gradients. Coefficients are ordered (0,1), (0,2), …, (m-2, m-1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub m: usize,
    pub coeffs: Vec<f64>,
}

fn pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |p| (p + 1..m).map(move |q| (p, q)))
}

fn minors(x: &DVector<f64>, m: usize) -> DVector<f64> {
    DVector::from_iterator(
        m * (m - 1) / 2,
        pairs(m).map(|(p, q)| x[2 * p] * x[2 * q + 1] - x[2 * q] * x[2 * p + 1]),
    )
}

impl Translation {
    pub fn zero(m: usize) -> Self {
        Self {
            m,
            coeffs: vec![0.0; m * (m - 1) / 2],
        }
    }

    /// Symmetric matrix Θ with `T(F) = xᵀΘx` on the flattening x of F.
    pub fn matrix(&self) -> DMatrix<f64> {
        theta_matrix(self.m, &DVector::from_column_slice(&self.coeffs))
    }

    pub fn eval(&self, f: &Field2n) -> f64 {
        let x = real_flat(f);
        minors(&x, self.m).dot(&DVector::from_column_slice(&self.coeffs))
    }
}

fn theta_matrix(m: usize, c: &DVector<f64>) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(2 * m, 2 * m);
    for (idx, (p, q)) in pairs(m).enumerate() {
        let h = 0.5 * c[idx];
        t[(2 * p, 2 * q + 1)] += h;
        t[(2 * q + 1, 2 * p)] += h;
        t[(2 * q, 2 * p + 1)] -= h;
        t[(2 * p + 1, 2 * q)] -= h;
    }
    t
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
fn golden_min(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimizer of the infimal convolution at a fixed splitting weight.
struct Split {
    p: f64,
    value: f64,
    fa: DVector<f64>,
    fb: DVector<f64>,
}

/// `h(p) = min_D p g₁(F + (1-p)D) + (1-p) g₂(F - pD)`; convex in p.
fn split_at(g: &[Quadratic; 2], x: &DVector<f64>, p: f64) -> Option<Split> {
    if p <= 0.0 {
        return Some(Split {
            p: 0.0,
            value: g[1].eval(x),
            fa: x.clone(),
            fb: x.clone(),
        });
    }
    if p >= 1.0 {
        return Some(Split {
            p: 1.0,
            value: g[0].eval(x),
            fa: x.clone(),
            fb: x.clone(),
        });
    }
    let m = &g[0].a * (1.0 - p) + &g[1].a * p;
    let r = (&g[0].a - &g[1].a) * x + &g[0].b - &g[1].b;
    let d = match m.clone().cholesky() {
        Some(ch) => -ch.solve(&r),
        None => -linalg::rsolve(&m, &r)?,
    };
    let fa = x + &d * (1.0 - p);
    let fb = x - &d * p;
    let value = p * g[0].eval(&fa) + (1.0 - p) * g[1].eval(&fb);
    value.is_finite().then_some(Split { p, value, fa, fb })
}

/// Convex envelope of `min(g₁, g₂)` at x, for convex quadratics g_j.
fn convex_envelope(g: &[Quadratic; 2], x: &DVector<f64>) -> Option<Split> {
    let h = |p: f64| split_at(g, x, p).map_or(f64::INFINITY, |s| s.value);
    let (p, _) = golden_min(0.0, 1.0, GOLDEN_TOL, h);
    let mut best = split_at(g, x, p)?;
    for end in [0.0, 1.0] {
        let s = split_at(g, x, end)?;
        if s.value < best.value {
            best = s;
        }
    }
    Some(best)
}

#[derive(Debug, Clone, Copy)]
pub struct LowerBoundOptions {
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for LowerBoundOptions {
    fn default() -> Self {
        Self {
            starts: 16,
            iterations: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBound {
    pub value: f64,
    pub translation: Translation,
    /// Optimal splitting weight of the envelope at the returned translation.
    pub weight: f64,
    pub ridge: [bool; 2],
}

struct LowerProblem<'a> {
    wells: &'a [Quadratic; 2],
    x: DVector<f64>,
    m: usize,
    margin: f64,
}

impl LowerProblem<'_> {
    fn feasible(&self, c: &DVector<f64>) -> bool {
        let t = theta_matrix(self.m, c);
        self.wells
            .iter()
            .all(|w| linalg::min_sym_eigenvalue(&(&w.a - &t)) >= self.margin)
    }

    /// Value and supergradient of the concave function φ(c).
    fn phi(&self, c: &DVector<f64>) -> Option<(f64, DVector<f64>, f64)> {
        let t = theta_matrix(self.m, c);
        let g = [0, 1].map(|j| Quadratic {
            a: &self.wells[j].a - &t,
            b: self.wells[j].b.clone(),
            c: self.wells[j].c,
        });
        let s = convex_envelope(&g, &self.x)?;
        let mx = minors(&self.x, self.m);
        let value = mx.dot(c) + s.value;
        let grad = &mx - minors(&s.fa, self.m) * s.p - minors(&s.fb, self.m) * (1.0 - s.p);
        Some((value, grad, s.p))
    }

    /// Largest feasible multiple of `dir`, found by bisection.
    fn feasible_extent(&self, dir: &DVector<f64>) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.feasible(&(dir * hi)) && hi < 1e6 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self.feasible(&(dir * mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn ascend(&self, mut c: DVector<f64>, iterations: usize) -> Option<(f64, DVector<f64>, f64)> {
        let (mut val, mut grad, mut p) = self.phi(&c)?;
        let mut step = 1.0 / (1.0 + grad.norm());
        for _ in 0..iterations {
            let gnorm = grad.norm();
            if gnorm < 1e-14 {
                break;
            }
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &c + &grad * step;
                if self.feasible(&trial) {
                    if let Some((v, g, pp)) = self.phi(&trial) {
                        if v > val {
                            c = trial;
                            val = v;
                            grad = g;
                            p = pp;
                            accepted = true;
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            if !accepted || step * gnorm < 1e-13 {
                break;
            }
            step *= 2.0;
        }
        Some((val, c, p))
    }
}

/// Best translation bound `max_T [T(F) + conv(min_j(W_j - T))(F)]` found by
/// multi-start supergradient ascent over the minor coefficients. The first
/// start is `T = 0`, so the result is never below the convex envelope of W.
pub fn translation_lower_bound(spec: &TwoWellSpec, f: &Field2n, opts: &LowerBoundOptions) -> Result<LowerBound> {
    spec.check_field(f)?;
    let (wells, ridge) = spec.quadratics();
    let m = spec.m;
    let scale = wells.iter().map(|w| w.a.amax()).fold(1.0, f64::max);
    let problem = LowerProblem {
        wells: &wells,
        x: real_flat(f),
        m,
        margin: 1e-9 * scale,
    };
    let npairs = m * (m - 1) / 2;
    let zero = DVector::zeros(npairs);
    let starts = opts.starts.max(1);
    let results: Vec<Option<(f64, DVector<f64>, f64)>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let init = if s == 0 || npairs == 0 {
                zero.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9).wrapping_add(s as u64));
                let dir = DVector::from_fn(npairs, |_, _| rng.gen_range(-1.0..1.0));
                let extent = problem.feasible_extent(&dir);
                dir * (extent * rng.gen_range(0.0..1.0))
            };
            if npairs == 0 {
                return problem.phi(&init).map(|(v, _, p)| (v, init, p));
            }
            problem.ascend(init, opts.iterations)
        })
        .collect();
    let mut best: Option<(f64, DVector<f64>, f64)> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.0 > b.0) {
            best = Some(r);
        }
    }
    let (value, c, weight) =
        best.ok_or_else(|| CoreError::Evaluation("convex envelope could not be evaluated".into()))?;
    if ridge.iter().any(|&r| r) {
        log::warn!("singular well stiffness: added a ridge of {RIDGE:e} to the envelope solves");
    }
    Ok(LowerBound {
        value,
        translation: Translation {
            m,
            coeffs: c.iter().copied().collect(),
        },
        weight,
        ridge,
    })
}

// ---------------------------------------------------------------------------
// Laminate upper bounds

/// Hierarchical rank-one splitting of F. A split node with weight p, unit
/// direction `a = (cos angle, sin angle)` and vector b sends the field F to
/// `F + (1-p) a⊗b` in the first child and `F - p a⊗b` in the second, so
/// that the parent field is the weighted average of its children and the
/// children differ by the rank-one matrix `a⊗b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaminationTreeF {
    Leaf {
        well: u8,
    },
    Split {
        p: f64,
        angle: f64,
        b: Vec<f64>,
        first: Box<LaminationTreeF>,
        second: Box<LaminationTreeF>,
    },
}

/// A leaf of a lamination tree with its field and volume weight.
#[derive(Debug, Clone)]
pub struct LeafState {
    pub well: u8,
    pub weight: f64,
    pub field: Field2n,
}

impl LaminationTreeF {
    pub fn depth(&self) -> usize {
        match self {
            LaminationTreeF::Leaf { .. } => 0,
            LaminationTreeF::Split { first, second, .. } => 1 + first.depth().max(second.depth()),
        }
    }

    /// Leaf fields of the tree applied to the average field `f`.
    pub fn leaves(&self, f: &Field2n) -> Vec<LeafState> {
        let mut out = Vec::new();
        self.collect(f, 1.0, &mut out);
        out
    }

    fn collect(&self, f: &Field2n, weight: f64, out: &mut Vec<LeafState>) {
        match self {
            LaminationTreeF::Leaf { well } => out.push(LeafState {
                well: *well,
                weight,
                field: f.clone(),
            }),
            LaminationTreeF::Split {
                p,
                angle,
                b,
                first,
                second,
            } => {
                let jump = Field2n::outer([angle.cos(), angle.sin()], b);
                first.collect(&f.add(&jump.scale(Complex64::new(1.0 - p, 0.0))), weight * p, out);
                second.collect(&f.sub(&jump.scale(Complex64::new(*p, 0.0))), weight * (1.0 - p), out);
            }
        }
    }

    /// Volume-weighted leaf energy, with each leaf in its lower well.
    pub fn energy(&self, spec: &TwoWellSpec, f: &Field2n) -> Result<f64> {
        let mut total = 0.0;
        for leaf in self.leaves(f) {
            total += leaf.weight * spec.eval_w(&leaf.field)?;
        }
        Ok(total)
    }

    fn shape(&self) -> Shape {
        match self {
            LaminationTreeF::Leaf { well } => Shape::Leaf(*well),
            LaminationTreeF::Split {
                p,
                angle,
                first,
                second,
                ..
            } => Shape::Split {
                p: *p,
                angle: *angle,
                first: Box::new(first.shape()),
                second: Box::new(second.shape()),
            },
        }
    }
}

/// Tree structure with weights and directions; the b vectors are solved for.
#[derive(Debug, Clone)]
enum Shape {
    Leaf(u8),
    Split {
        p: f64,
        angle: f64,
        first: Box<Shape>,
        second: Box<Shape>,
    },
}

struct LeafPath {
    well: u8,
    weight: f64,
    /// (node index, coefficient, direction): the leaf field is
    /// `F + Σ coefficient · a ⊗ b_node`.
    terms: Vec<(usize, f64, [f64; 2])>,
}

impl Shape {
    fn nodes(&self) -> usize {
        match self {
            Shape::Leaf(_) => 0,
            Shape::Split { first, second, .. } => 1 + first.nodes() + second.nodes(),
        }
    }

    fn paths(&self) -> Vec<LeafPath> {
        let mut out = Vec::new();
        let mut next = 0;
        self.walk(&mut next, 1.0, &mut Vec::new(), &mut out);
        out
    }

    fn walk(&self, next: &mut usize, weight: f64, terms: &mut Vec<(usize, f64, [f64; 2])>, out: &mut Vec<LeafPath>) {
        match self {
            Shape::Leaf(well) => out.push(LeafPath {
                well: *well,
                weight,
                terms: terms.clone(),
            }),
            Shape::Split {
                p,
                angle,
                first,
                second,
            } => {
                let idx = *next;
                *next += 1;
                let a = [angle.cos(), angle.sin()];
                terms.push((idx, 1.0 - p, a));
                first.walk(next, weight * p, terms, out);
                terms.pop();
                terms.push((idx, -p, a));
                second.walk(next, weight * (1.0 - p), terms, out);
                terms.pop();
            }
        }
    }

    /// Mutable references to the (p, angle) pairs in preorder.
    fn params_mut(&mut self) -> Vec<(&mut f64, &mut f64)> {
        let mut out = Vec::new();
        fn rec<'a>(s: &'a mut Shape, out: &mut Vec<(&'a mut f64, &'a mut f64)>) {
            if let Shape::Split {
                p,
                angle,
                first,
                second,
            } = s
            {
                out.push((p, angle));
                rec(first, out);
                rec(second, out);
            }
        }
        rec(self, &mut out);
        out
    }

    fn get_param(&mut self, node: usize, which: usize) -> f64 {
        let params = self.params_mut();
        if which == 0 {
            *params[node].0
        } else {
            *params[node].1
        }
    }

    fn set_param(&mut self, node: usize, which: usize, v: f64) {
        let mut params = self.params_mut();
        if which == 0 {
            *params[node].0 = v;
        } else {
            *params[node].1 = v;
        }
    }

    /// Replaces the `leaf`-th leaf (preorder) by a split into both wells.
    fn split_leaf(&self, leaf: usize, p: f64, angle: f64) -> Shape {
        fn rec(s: &Shape, target: usize, seen: &mut usize, p: f64, angle: f64) -> Shape {
            match s {
                Shape::Leaf(w) => {
                    let here = *seen;
                    *seen += 1;
                    if here == target {
                        Shape::Split {
                            p,
                            angle,
                            first: Box::new(Shape::Leaf(1)),
                            second: Box::new(Shape::Leaf(2)),
                        }
                    } else {
                        Shape::Leaf(*w)
                    }
                }
                Shape::Split {
                    p: q,
                    angle: t,
                    first,
                    second,
                } => Shape::Split {
                    p: *q,
                    angle: *t,
                    first: Box::new(rec(first, target, seen, p, angle)),
                    second: Box::new(rec(second, target, seen, p, angle)),
                },
            }
        }
        rec(self, leaf, &mut 0, p, angle)
    }

    fn leaf_depths(&self) -> Vec<usize> {
        fn rec(s: &Shape, d: usize, out: &mut Vec<usize>) {
            match s {
                Shape::Leaf(_) => out.push(d),
                Shape::Split { first, second, .. } => {
                    rec(first, d + 1, out);
                    rec(second, d + 1, out);
                }
            }
        }
        let mut out = Vec::new();
        rec(self, 0, &mut out);
        out
    }

    fn reassign(&self, wells: &[u8]) -> Shape {
        fn rec(s: &Shape, wells: &[u8], seen: &mut usize) -> Shape {
            match s {
                Shape::Leaf(_) => {
                    let w = wells[*seen];
                    *seen += 1;
                    Shape::Leaf(w)
                }
                Shape::Split {
                    p,
                    angle,
                    first,
                    second,
                } => Shape::Split {
                    p: *p,
                    angle: *angle,
                    first: Box::new(rec(first, wells, seen)),
                    second: Box::new(rec(second, wells, seen)),
                },
            }
        }
        rec(self, wells, &mut 0)
    }

    fn with_b(&self, b: &DVector<f64>, m: usize) -> LaminationTreeF {
        fn rec(s: &Shape, b: &DVector<f64>, m: usize, next: &mut usize) -> LaminationTreeF {
            match s {
                Shape::Leaf(w) => LaminationTreeF::Leaf { well: *w },
                Shape::Split {
                    p,
                    angle,
                    first,
                    second,
                } => {
                    let idx = *next;
                    *next += 1;
                    let bv = b.rows(idx * m, m).iter().copied().collect();
                    let first = Box::new(rec(first, b, m, next));
                    let second = Box::new(rec(second, b, m, next));
                    LaminationTreeF::Split {
                        p: *p,
                        angle: *angle,
                        b: bv,
                        first,
                        second,
                    }
                }
            }
        }
        rec(self, b, m, &mut 0)
    }
}

struct UpperProblem<'a> {
    wells: &'a [Quadratic; 2],
    x: DVector<f64>,
    m: usize,
}

struct Evaluated {
    /// Energy with every leaf in its assigned well.
    assigned: f64,
    /// Energy with every leaf in its lower well.
    value: f64,
    b: DVector<f64>,
    best_wells: Vec<u8>,
}

impl UpperProblem<'_> {
    /// Solves exactly for the b vectors: the assigned energy is a convex
    /// quadratic in them.
    fn evaluate(&self, shape: &Shape) -> Evaluated {
        let m = self.m;
        let dim = 2 * m;
        let nb = shape.nodes() * m;
        let paths = shape.paths();
        let projector = |path: &LeafPath| {
            let mut pm = DMatrix::zeros(dim, nb);
            for &(node, coef, a) in &path.terms {
                for k in 0..m {
                    pm[(2 * k, node * m + k)] += coef * a[0];
                    pm[(2 * k + 1, node * m + k)] += coef * a[1];
                }
            }
            pm
        };
        let projs: Vec<DMatrix<f64>> = paths.iter().map(projector).collect();
        let mut b = DVector::zeros(nb);
        if nb > 0 {
            let mut h = DMatrix::zeros(nb, nb);
            let mut g = DVector::zeros(nb);
            for (path, pm) in paths.iter().zip(&projs) {
                let w = &self.wells[(path.well - 1) as usize];
                let pt = pm.transpose();
                h += &pt * &w.a * pm * path.weight;
                g += &pt * (&w.a * &self.x + &w.b) * path.weight;
            }
            let ridge = 1e-14 * h.diagonal().amax().max(1e-300);
            let hr = &h + DMatrix::identity(nb, nb) * ridge;
            b = match hr.clone().cholesky() {
                Some(ch) => -ch.solve(&g),
                None => hr
                    .svd(true, true)
                    .solve(&(-&g), 1e-14)
                    .unwrap_or_else(|_| DVector::zeros(nb)),
            };
        }
        let mut assigned = 0.0;
        let mut value = 0.0;
        let mut best_wells = Vec::with_capacity(paths.len());
        for (path, pm) in paths.iter().zip(&projs) {
            let field = &self.x + pm * &b;
            let e = [self.wells[0].eval(&field), self.wells[1].eval(&field)];
            assigned += path.weight * e[(path.well - 1) as usize];
            value += path.weight * e[0].min(e[1]);
            best_wells.push(if e[0] <= e[1] { 1 } else { 2 });
        }
        if !assigned.is_finite() {
            assigned = f64::INFINITY;
            value = f64::INFINITY;
        }
        Evaluated {
            assigned,
            value,
            b,
            best_wells,
        }
    }

    fn optimize_param(&self, shape: &mut Shape, node: usize, which: usize) {
        let (lo, hi) = if which == 0 {
            (1e-9, 1.0 - 1e-9)
        } else {
            (0.0, std::f64::consts::PI)
        };
        let current = shape.get_param(node, which);
        let eval = |v: f64| {
            let mut s = shape.clone();
            s.set_param(node, which, v);
            self.evaluate(&s).assigned
        };
        let base = eval(current);
        let grid = 16;
        let h = (hi - lo) / grid as f64;
        let samples: Vec<(f64, f64)> = (0..grid)
            .map(|i| {
                let v = if which == 0 { lo + (i as f64 + 0.5) * h } else { lo + i as f64 * h };
                (v, eval(v))
            })
            .collect();
        let (imin, _) = samples
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, s)| (i, s.1))
            .unwrap_or((0, f64::INFINITY));
        let centre = samples[imin].0;
        let (a, b) = if which == 0 {
            ((centre - h).max(lo), (centre + h).min(hi))
        } else {
            (centre - h, centre + h)
        };
        let (v, fv) = golden_min(a, b, 1e-10, eval);
        let v = if which == 1 { v.rem_euclid(std::f64::consts::PI) } else { v };
        // also refine around the current value, which may sit in a narrower valley
        let (a2, b2) = if which == 0 {
            ((current - h).max(lo), (current + h).min(hi))
        } else {
            (current - h, current + h)
        };
        let (v2, fv2) = golden_min(a2, b2, 1e-10, eval);
        let v2 = if which == 1 { v2.rem_euclid(std::f64::consts::PI) } else { v2 };
        let (best_v, best_f) = if fv2 < fv { (v2, fv2) } else { (v, fv) };
        if best_f < base {
            shape.set_param(node, which, best_v);
        }
    }

    /// Coordinate descent over all (p, angle) pairs, followed by moving
    /// leaves to their lower well while that helps.
    fn optimize(&self, mut shape: Shape, sweeps: usize) -> (Shape, Evaluated) {
        let nodes = shape.nodes();
        let mut current = self.evaluate(&shape);
        for _ in 0..sweeps {
            let before = current.assigned;
            for node in 0..nodes {
                for which in [1, 0] {
                    self.optimize_param(&mut shape, node, which);
                }
            }
            current = self.evaluate(&shape);
            let wells: Vec<u8> = current.best_wells.clone();
            let moved = shape.reassign(&wells);
            let alt = self.evaluate(&moved);
            if alt.assigned < current.assigned {
                shape = moved;
                current = alt;
            }
            if before - current.assigned <= 1e-15 * before.abs().max(1.0) {
                break;
            }
        }
        (shape, current)
    }
}

#[derive(Debug, Clone)]
pub struct UpperBoundOptions {
    pub max_rank: usize,
    pub restarts: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// Extra starting trees (b vectors are re-optimized). Trees deeper than
    /// `max_rank` are ignored.
    pub seeds: Vec<LaminationTreeF>,
}

impl Default for UpperBoundOptions {
    fn default() -> Self {
        Self {
            max_rank: 2,
            restarts: 4,
            sweeps: 6,
            seed: 0,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UpperBound {
    pub value: f64,
    pub tree: LaminationTreeF,
}

/// Smallest laminate energy found over trees of depth at most `max_rank`.
///
/// Trees are grown greedily one depth level at a time: at level d every
/// leaf shallower than d is tried as a split into both wells from several
/// random starting (p, angle) pairs, all node parameters are re-optimized,
/// and the best improvement is kept. The work done for rank r is a prefix
/// of the work done for rank r + 1, so the value never increases with
/// `max_rank`.
pub fn lamination_upper_bound(spec: &TwoWellSpec, f: &Field2n, opts: &UpperBoundOptions) -> Result<UpperBound> {
    spec.check_field(f)?;
    let (wells, _) = spec.quadratics();
    let problem = UpperProblem {
        wells: &wells,
        x: real_flat(f),
        m: spec.m,
    };
    let e = [wells[0].eval(&problem.x), wells[1].eval(&problem.x)];
    let mut shape = Shape::Leaf(if e[0] <= e[1] { 1 } else { 2 });
    let mut best = problem.evaluate(&shape);
    for seed_tree in opts.seeds.iter().filter(|t| t.depth() <= opts.max_rank) {
        let (s, ev) = problem.optimize(seed_tree.shape(), opts.sweeps);
        if ev.value < best.value {
            shape = s;
            best = ev;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for level in 1..=opts.max_rank {
        loop {
            let depths = shape.leaf_depths();
            let mut candidates = Vec::new();
            for (leaf, &d) in depths.iter().enumerate() {
                if d >= level {
                    continue;
                }
                for r in 0..opts.restarts.max(1) {
                    let (p0, a0) = if r == 0 {
                        (0.5, 0.0)
                    } else {
                        (rng.gen_range(0.05..0.95), rng.gen_range(0.0..std::f64::consts::PI))
                    };
                    candidates.push(shape.split_leaf(leaf, p0, a0));
                }
            }
            let results: Vec<(Shape, Evaluated)> = candidates
                .into_par_iter()
                .map(|c| problem.optimize(c, opts.sweeps))
                .collect();
            let mut improved = false;
            for (s, ev) in results {
                if ev.value < best.value - 1e-15 * best.value.abs().max(1.0) {
                    shape = s;
                    best = ev;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }
    let tree = shape.reassign(&best.best_wells).with_b(&best.b, spec.m);
    let value = tree.energy(spec, f)?.min(best.value);
    Ok(UpperBound { value, tree })
}

// ---------------------------------------------------------------------------
// Scans and reductions

#[derive(Debug, Clone, Copy)]
pub struct BoundBudget {
    pub lower: LowerBoundOptions,
    pub max_rank: usize,
    pub restarts: usize,
    pub sweeps: usize,
}

impl Default for BoundBudget {
    fn default() -> Self {
        Self {
            lower: LowerBoundOptions::default(),
            max_rank: 2,
            restarts: 4,
            sweeps: 6,
        }
    }
}

impl BoundBudget {
    fn upper(&self, seed: u64) -> UpperBoundOptions {
        UpperBoundOptions {
            max_rank: self.max_rank,
            restarts: self.restarts,
            sweeps: self.sweeps,
            seed,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRecord {
    pub f: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub records: Vec<GapRecord>,
    pub max_gap: f64,
    pub argmax: Vec<f64>,
    pub min_gap: f64,
    pub caveat: &'static str,
}

/// Entries of F in row-major order.
fn row_major(f: &Field2n) -> Vec<f64> {
    (0..2)
        .flat_map(|i| (0..f.n()).map(move |k| (i, k)))
        .map(|(i, k)| f.get(i, k).re)
        .collect()
}

/// Both bounds at every grid point; grid points are processed in
/// parallel, each with its own seed, and reported in input order.
pub fn gap_scan(spec: &TwoWellSpec, grid: &[Field2n], budget: &BoundBudget) -> Result<GapReport> {
    let records: Vec<Result<GapRecord>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let mut lo = budget.lower;
            lo.seed = budget.lower.seed.wrapping_add(i as u64);
            let lower = translation_lower_bound(spec, f, &lo)?.value;
            let upper = lamination_upper_bound(spec, f, &budget.upper(budget.lower.seed.wrapping_add(i as u64)))?.value;
            Ok(GapRecord {
                f: row_major(f),
                lower,
                upper,
                gap: upper - lower,
            })
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let (mut max_gap, mut argmax, mut min_gap) = (f64::NEG_INFINITY, Vec::new(), f64::INFINITY);
    for r in &records {
        if r.gap > max_gap {
            max_gap = r.gap;
            argmax = r.f.clone();
        }
        min_gap = min_gap.min(r.gap);
    }
    Ok(GapReport {
        records,
        max_gap,
        argmax,
        min_gap,
        caveat: CAVEAT,
    })
}

impl GapReport {
    pub fn to_csv(&self, m: usize) -> String {
        let mut header: Vec<String> = (0..2)
            .flat_map(|i| (0..m).map(move |k| format!("F{}{}", i + 1, k + 1)))
            .collect();
        header.extend(["lower", "upper", "gap"].map(String::from));
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.records {
            let mut row: Vec<String> = r.f.iter().map(|v| crate::csv_number(*v)).collect();
            row.extend([r.lower, r.upper, r.gap].map(crate::csv_number));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Tensor-product grid over the entries of F (row-major order), one
/// `(min, max, count)` range per entry.
pub fn grid_from_ranges(m: usize, ranges: &[(f64, f64, usize)]) -> Result<Vec<Field2n>> {
    if ranges.len() != 2 * m {
        return Err(CoreError::DimensionMismatch {
            expected: 2 * m,
            got: ranges.len(),
        });
    }
    let axes: Vec<Vec<f64>> = ranges
        .iter()
        .map(|&(lo, hi, count)| match count {
            0 => Vec::new(),
            1 => vec![lo],
            _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut vals = vec![0.0; 2 * m];
        for e in (0..2 * m).rev() {
            vals[e] = axes[e][idx % axes[e].len()];
            idx /= axes[e].len();
        }
        out.push(Field2n::from_rows(&vals[..m], &vals[m..])?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct KohnReport {
    pub spec: TwoWellSpec,
    pub lower: f64,
    pub upper: f64,
    pub upper_tree: LaminationTreeF,
    pub caveat: &'static str,
}

/// The infimum of `(E₀, 1)·K*(E₀, 1)` over all composites of K₁ and K₂ is
/// the quasiconvexification at E₀ of the two-well energy built from K₁ and
/// K₂; returns that spec with both bounds at E₀.
pub fn kohn_reduction(
    k1: &AugmentedTensor,
    k2: &AugmentedTensor,
    e0: &Field2n,
    budget: &BoundBudget,
) -> Result<KohnReport> {
    k1.ensure_positive_definite()?;
    k2.ensure_positive_definite()?;
    let spec = TwoWellSpec::new(k1.clone(), k2.clone())?;
    let lower = translation_lower_bound(&spec, e0, &budget.lower)?.value;
    let up = lamination_upper_bound(&spec, e0, &budget.upper(budget.lower.seed))?;
    Ok(KohnReport {
        spec,
        lower,
        upper: up.value,
        upper_tree: up.tree,
        caveat: CAVEAT,
    })
}

/// Two-well problem whose infimum at `superfield` is the W-transform value
/// `Σ E_k·L*E_k + Σ J_k·L*⁻¹J_k` minimized over composites.
#[derive(Debug, Clone)]
pub struct WReduction {
    pub spec: TwoWellSpec,
    pub superfield: Field2n,
}

fn orthogonality(fields: &[&Field2n]) -> Result<()> {
    for (i, a) in fields.iter().enumerate() {
        for b in &fields[i + 1..] {
            let ab = tensor::inner(a, b)?.norm();
            let na = tensor::inner(a, a)?.norm().sqrt();
            let nb = tensor::inner(b, b)?.norm().sqrt();
            if ab > 1e-12 * (na * nb).max(1.0) {
                return Err(CoreError::NotOrthogonal(ab));
            }
        }
    }
    Ok(())
}

/// Superfield `(E₁, …, E_h, R⊥ᵀJ_{h+1}, …, R⊥ᵀJ_n)` and supertensors
/// `diag(L_j, …, L_j, [R⊥L_jR⊥ᵀ]⁻¹, …)` with `m = n²`. The optional
/// Lagrange multiplier `c` for the volume fraction is added to the
/// constant of well 1.
pub fn wtransform_reduction(
    l1: &BlockTensor,
    l2: &BlockTensor,
    e_list: &[Field2n],
    j_list: &[Field2n],
    lagrange: Option<f64>,
) -> Result<WReduction> {
    let n = l1.n();
    if l2.n() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: l2.n(),
        });
    }
    if e_list.len() + j_list.len() != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: e_list.len() + j_list.len(),
        });
    }
    for f in e_list.iter().chain(j_list) {
        if f.n() != n {
            return Err(CoreError::DimensionMismatch { expected: n, got: f.n() });
        }
    }
    let all: Vec<&Field2n> = e_list.iter().chain(j_list).collect();
    orthogonality(&all)?;

    let rt = tensor::r_perp().transpose();
    let mut cols = Vec::with_capacity(n * n);
    for e in e_list {
        cols.extend((0..n).map(|k| e.matrix().column(k).into_owned()));
    }
    for j in j_list {
        let rj = rt * j.matrix().fixed_rows::<2>(0);
        cols.extend((0..n).map(|k| linalg::CVector::from_iterator(2, rj.column(k).iter().copied())));
    }
    let superfield = Field2n::from_matrix(linalg::CMatrix::from_columns(&cols))?;

    let supertensor = |l: &BlockTensor| -> Result<BlockTensor> {
        let dual = rotate_perp(l).inverse()?;
        let mut parts: Vec<&BlockTensor> = Vec::with_capacity(n);
        for _ in e_list {
            parts.push(l);
        }
        for _ in j_list {
            parts.push(&dual);
        }
        BlockTensor::block_diag(&parts)
    };
    let m = n * n;
    let zero = Field2n::zeros(m);
    let c1 = Complex64::new(lagrange.unwrap_or(0.0), 0.0);
    let k1 = AugmentedTensor::new(supertensor(l1)?, zero.clone(), c1)?;
    let k2 = AugmentedTensor::new(supertensor(l2)?, zero, Complex64::new(0.0, 0.0))?;
    Ok(WReduction {
        spec: TwoWellSpec::new(k1, k2)?,
        superfield,
    })
}

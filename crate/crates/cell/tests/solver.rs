use complab_cell::*;
use complab_core::analytic::keller_dykhne_residual;
use complab_core::geometry::{self, CellGeometry};
use complab_core::laminate::{self, LaminateTree};
use complab_core::linalg::{CMatrix, CVector};
use complab_core::tensor::BlockTensor;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> BlockTensor {
    let a = DMatrix::from_fn(2 * n, 2 * n, |_, _| rng.gen_range(-1.0..1.0));
    BlockTensor::from_real_flat(&(&a * a.transpose() + DMatrix::identity(2 * n, 2 * n) * 0.5)).unwrap()
}

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn homogeneous_fields_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let l1 = random_spd(&mut rng, 2);
    let l2 = random_spd(&mut rng, 2);
    let g = CellGeometry::homogeneous(2, 16, 1).unwrap();
    let e0 = CVector::from_iterator(4, (0..4).map(|_| c(rng.gen_range(-1.0..1.0))));
    let sol = solve_cell(&g, &PhaseTensor::from_block(&l1), &PhaseTensor::from_block(&l2), &e0, opts()).unwrap();
    let j0 = l1.flat() * &e0;
    for cell in 0..sol.cells() {
        for k in 0..4 {
            assert!((sol.cell_e(cell)[k] - e0[k]).norm() < 1e-12);
            assert!((sol.cell_j(cell)[k] - j0[k]).norm() < 1e-12);
        }
    }
    let g2 = CellGeometry::homogeneous(2, 16, 0).unwrap();
    let l = effective_block(&g2, &l1, &l2, opts()).unwrap();
    assert!(l.max_abs_diff(&l2) < 1e-12);
}

#[test]
fn unit_contrast_gives_identity() {
    for spec in ["random(3,0.4)@32", "random3(2,0.5)@8"] {
        let g = CellGeometry::generate(spec).unwrap();
        let s = sigma_star_fn(&g, c(1.0), opts()).unwrap();
        assert!(max_diff(&s, &CMatrix::identity(g.dim(), g.dim())) < 1e-12);
    }
    let g = CellGeometry::homogeneous(2, 8, 1).unwrap();
    let s = sigma_star_fn(&g, Complex64::new(2.0, 3.0), opts()).unwrap();
    assert!(max_diff(&s, &(CMatrix::identity(2, 2) * Complex64::new(2.0, 3.0))) < 1e-12);
}

#[test]
fn stripes_match_laminate_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(n, f) in &[(64usize, 0.25), (32, 0.5)] {
        let g = geometry::stripes(n, f).unwrap();
        let tree = LaminateTree::branch(LaminateTree::leaf(1), LaminateTree::leaf(2), 0.0, g.volume_fraction());
        // scalar conductivity: harmonic across, arithmetic along
        let s = sigma_star_fn(&g, c(5.0), opts()).unwrap();
        let fr = g.volume_fraction();
        assert!((s[(0, 0)].re - 1.0 / (fr / 5.0 + (1.0 - fr))).abs() < 1e-8);
        assert!((s[(1, 1)].re - (5.0 * fr + 1.0 - fr)).abs() < 1e-8);
        assert!(s[(0, 1)].norm() < 1e-8);
        // block tensors against the laminate engine
        let l1 = random_spd(&mut rng, 2);
        let l2 = random_spd(&mut rng, 2);
        let exact = laminate::effective_tensor(&tree, &l1, &l2).unwrap();
        let cell = effective_block(&g, &l1, &l2, opts()).unwrap();
        assert!(cell.max_abs_diff(&exact) < 1e-8, "{}", cell.max_abs_diff(&exact));
    }
}

#[test]
fn checkerboard_square_root_law() {
    let g = CellGeometry::generate("checkerboard@256").unwrap();
    let s = sigma_star_fn(&g, c(4.0), opts()).unwrap();
    for i in 0..2 {
        assert!((s[(i, i)].re - 2.0).abs() < 0.02);
    }
    assert!(s[(0, 1)].norm() < 1e-8);
}

#[test]
fn basis_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = CellGeometry::generate("random(5,0.5,4)@16").unwrap();
    let l1 = PhaseTensor::from_block(&random_spd(&mut rng, 2));
    let l2 = PhaseTensor::from_block(&random_spd(&mut rng, 2));
    let prob = CellProblem::new(&g, &l1, &l2, opts()).unwrap();
    let forward = prob.effective_tensor().unwrap();
    for col in [3usize, 1, 0, 2] {
        let mut e0 = CVector::zeros(4);
        e0[col] = c(1.0);
        let sol = prob.solve(&e0).unwrap();
        for r in 0..4 {
            assert_eq!(sol.avg_j[r], forward[(r, col)]);
        }
    }
}

#[test]
fn solution_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = CellGeometry::generate("random(9,0.5)@32").unwrap();
    let l1 = random_spd(&mut rng, 2);
    let l2 = random_spd(&mut rng, 2);
    let (p1, p2) = (PhaseTensor::from_block(&l1), PhaseTensor::from_block(&l2));
    let prob = CellProblem::new(&g, &p1, &p2, opts()).unwrap();
    let lstar = prob.effective_tensor().unwrap();
    assert!(symmetry_residual(&lstar) <= 1e-9, "{}", symmetry_residual(&lstar));
    let e0 = CVector::from_iterator(4, (0..4).map(|_| c(rng.gen_range(-1.0..1.0))));
    let sol = prob.solve(&e0).unwrap();
    assert!(sol.residual <= 1e-9);
    assert!((&sol.avg_e - &e0).iter().all(|z| z.norm() < 1e-12));
    let expect = (e0.transpose() * &lstar * &e0)[(0, 0)];
    assert!((sol.energy - expect).norm() <= 1e-9 * expect.norm());
    // harmonic-arithmetic sandwich
    let lb = BlockTensor::from_flat(lstar).unwrap();
    let f = g.volume_fraction();
    let arith = l1.scale(c(f)).add(&l2.scale(c(1.0 - f))).unwrap();
    let harm = l1.inverse().unwrap().scale(c(f)).add(&l2.inverse().unwrap().scale(c(1.0 - f))).unwrap().inverse().unwrap();
    assert!(arith.sub(&lb).unwrap().min_eigenvalue() > -1e-9);
    assert!(lb.sub(&harm).unwrap().min_eigenvalue() > -1e-9);
}

#[test]
fn herglotz_and_branch_cut() {
    let g = CellGeometry::generate("random(11,0.4)@32").unwrap();
    for s in [Complex64::new(1.0, 1.0), Complex64::new(-2.0, 0.5), Complex64::new(0.1, 3.0)] {
        let m = sigma_star_fn(&g, s, opts()).unwrap();
        let im = DMatrix::from_fn(2, 2, |i, j| 0.5 * (m[(i, j)].im + m[(j, i)].im));
        assert!(im.symmetric_eigenvalues().min() >= -1e-10, "{s}");
    }
    for s in [c(-1.0), c(0.0), Complex64::new(-3.0, -0.0)] {
        assert!(matches!(sigma_star_fn(&g, s, opts()), Err(CellError::BranchCut(_))));
    }
}

#[test]
fn keller_dykhne_improves_under_refinement() {
    for seed in [0u64, 1] {
        let mut prev = f64::INFINITY;
        for n in [32usize, 64] {
            let g = CellGeometry::generate(&format!("random({seed},0.5)@{n}")).unwrap();
            let a = sigma_star_fn(&g, c(5.0), opts()).unwrap();
            let b = sigma_star_fn(&g, c(0.2), opts()).unwrap();
            let r = keller_dykhne_residual(&a, &b).unwrap();
            assert!(r < prev && r < 1e-2, "{r}");
            prev = r;
        }
    }
}

#[test]
fn monotone_in_contrast() {
    let g = CellGeometry::generate("random(4,0.5)@32").unwrap();
    let mut prev: Option<CMatrix> = None;
    for s in [1.0, 2.0, 4.0, 8.0] {
        let m = sigma_star_fn(&g, c(s), opts()).unwrap();
        if let Some(p) = prev {
            let d = DMatrix::from_fn(2, 2, |i, j| 0.5 * ((m[(i, j)] - p[(i, j)]).re + (m[(j, i)] - p[(j, i)]).re));
            assert!(d.symmetric_eigenvalues().min() >= -1e-10);
        }
        prev = Some(m);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let g = CellGeometry::generate("random(6,0.5)@64").unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sigma_star_fn(&g, Complex64::new(3.0, 1.0), opts()).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn solver_errors() {
    let g = CellGeometry::generate("random(1,0.5)@32").unwrap();
    assert!(matches!(sigma_star_fn(&g, c(2e6), opts()), Err(CellError::ContrastTooHigh(_))));
    assert!(sigma_star_fn(&g, c(1e6), opts()).is_ok());
    let tight = SolverOptions {
        max_iter: Some(2),
        ..opts()
    };
    assert!(matches!(sigma_star_fn(&g, c(50.0), tight), Err(CellError::NoConvergence { .. })));
    let bad = PhaseTensor::scalar(2, c(-1.0));
    assert!(matches!(
        solve_cell(&g, &bad, &PhaseTensor::scalar(2, c(1.0)), &CVector::zeros(2), opts()),
        Err(CellError::NotPositiveDefinite(_))
    ));
}

#[test]
fn gauss_scheme_is_consistent() {
    let o = SolverOptions {
        scheme: Scheme::Gauss,
        ..opts()
    };
    let g = geometry::stripes(32, 0.5).unwrap();
    let s = sigma_star_fn(&g, c(3.0), o).unwrap();
    assert!((s[(0, 0)].re - 1.5).abs() < 1e-8 && (s[(1, 1)].re - 2.0).abs() < 1e-8);
    let g = CellGeometry::generate("checkerboard@64").unwrap();
    let s = sigma_star_fn(&g, c(4.0), o).unwrap();
    assert!((s[(0, 0)].re - 2.0).abs() < 0.02);
}

mod props {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn scalar_sandwich_and_symmetry(seed in 0u64..1000, s in 1.5f64..20.0, f in 0.2f64..0.8) {
            let g = geometry::random(2, 16, seed, f, 8).unwrap();
            let m = sigma_star_fn(&g, c(s), opts()).unwrap();
            let fr = g.volume_fraction();
            let (arith, harm) = (s * fr + 1.0 - fr, 1.0 / (fr / s + 1.0 - fr));
            prop_assert!(symmetry_residual(&m) < 1e-9);
            let re = DMatrix::from_fn(2, 2, |i, j| m[(i, j)].re);
            let ev = re.symmetric_eigenvalues();
            prop_assert!(ev.min() >= harm - 1e-9 && ev.max() <= arith + 1e-9);
        }
    }
}

use complab_cell::*;
use complab_core::geometry::CellGeometry;
use num_complex::Complex64;

fn columns(g: &CellGeometry, s: f64) -> MatrixField {
    let d = g.dim();
    let prob = CellProblem::new(
        g,
        &PhaseTensor::scalar(d, Complex64::new(s, 0.0)),
        &PhaseTensor::scalar(d, Complex64::new(1.0, 0.0)),
        SolverOptions::default(),
    )
    .unwrap();
    MatrixField::from_columns(&prob.basis_solutions().unwrap()).unwrap()
}

#[test]
fn homogeneous_identity_field() {
    let g = CellGeometry::homogeneous(3, 8, 1).unwrap();
    let rep = cofactor_diagnostics(&columns(&g, 3.0));
    assert!((rep.det.min - 1.0).abs() < 1e-12 && (rep.det.max - 1.0).abs() < 1e-12);
    let tc = rep.tr_cof.unwrap();
    assert!((tc.min - 3.0).abs() < 1e-12 && (tc.max - 3.0).abs() < 1e-12);
    assert_eq!(rep.det.negative_fraction, 0.0);
}

#[test]
fn planar_determinant_stays_nonnegative_under_refinement() {
    let mut worst = Vec::new();
    for n in [32usize, 64, 128] {
        let g = CellGeometry::generate(&format!("random(2,0.5)@{n}")).unwrap();
        let rep = cofactor_diagnostics(&columns(&g, 10.0));
        assert!(rep.tr_cof.is_none());
        worst.push(rep.det.min.min(0.0));
    }
    assert!(worst[2] >= -1e-2, "{worst:?}");
    assert!(worst[2].abs() <= worst[0].abs() + 1e-12, "{worst:?}");
}

#[test]
fn tori_report_runs() {
    let g = CellGeometry::generate("tori-chain@16").unwrap();
    let rep = cofactor_diagnostics(&columns(&g, 1e3));
    assert_eq!(rep.dim, 3);
    assert!(rep.det.min <= rep.det.max);
    assert!(rep.tr_cof.is_some());
}

#[test]
fn block_field_matches_columns() {
    let g = CellGeometry::generate("random(1,0.5)@16").unwrap();
    let cols = columns(&g, 4.0);
    let l = complab_core::tensor::BlockTensor::block_diag(&[
        &complab_core::tensor::BlockTensor::scalar(Complex64::new(4.0, 0.0)),
        &complab_core::tensor::BlockTensor::scalar(Complex64::new(4.0, 0.0)),
    ])
    .unwrap();
    let one = complab_core::tensor::BlockTensor::identity(2);
    let mut e0 = complab_core::linalg::CVector::zeros(4);
    e0[0] = Complex64::new(1.0, 0.0);
    e0[3] = Complex64::new(1.0, 0.0);
    let sol = solve_cell(&g, &PhaseTensor::from_block(&l), &PhaseTensor::from_block(&one), &e0, SolverOptions::default()).unwrap();
    let block = MatrixField::from_block(&sol).unwrap();
    let diff = cols.values.iter().zip(&block.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-8, "{diff}");
}
